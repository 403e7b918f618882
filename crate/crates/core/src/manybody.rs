// SPDX-License-Identifier: Apache-2.0

//! Exact evolution of `N` coupled sites, used to check the mean-field
//! reduction at small `N`.
//!
//! The full Hamiltonian is
//! `sum_j H0(j) - (lambda / 2N) sum_a sum_{j,k} H1_a(j) H1_a(k)`, with the
//! `j = k` terms kept. Site 0 is the most significant factor of the product
//! basis. Up to [`DENSE_LIMIT`] states the evolution is exact through an
//! eigendecomposition; beyond it the generator is applied matrix-free
//! inside RK4.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};

use crate::dynamics::{evolve, IntegratorConfig, Propagation};
use crate::error::{invalid, Error, Result};
use crate::operators::{HermitianOperator, ModelSpec, C64};

/// Largest product-space dimension a state may have.
pub const STATE_BUDGET: usize = 200_000;

/// Largest dimension for which the dense Hamiltonian is built and
/// diagonalized.
pub const DENSE_LIMIT: usize = 4096;

/// Allowed `| |psi|^2 - 1 |` along an oracle run.
pub const NORM_TOLERANCE: f64 = 1e-8;

fn product_dim(local_dim: usize, n_sites: usize) -> Result<usize> {
    if n_sites == 0 {
        return Err(invalid("n_sites", "must be positive"));
    }
    let mut dim = 1usize;
    for _ in 0..n_sites {
        dim = dim.saturating_mul(local_dim);
        if dim > STATE_BUDGET {
            return Err(Error::Budget {
                dim,
                budget: STATE_BUDGET,
            });
        }
    }
    Ok(dim)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManyBodyState {
    n_sites: usize,
    local_dim: usize,
    amplitudes: Array1<C64>,
}

impl ManyBodyState {
    pub fn new(n_sites: usize, local_dim: usize, amplitudes: Array1<C64>) -> Result<Self> {
        let dim = product_dim(local_dim, n_sites)?;
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: amplitudes.len(),
            });
        }
        let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("norm {norm} differs from 1")));
        }
        Ok(Self {
            n_sites,
            local_dim,
            amplitudes,
        })
    }

    /// `|psi> ⊗ ... ⊗ |psi>` for a normalized single-site vector.
    pub fn product(local: &Array1<C64>, n_sites: usize) -> Result<Self> {
        let d = local.len();
        let dim = product_dim(d, n_sites)?;
        let mut amps = Array1::from_elem(1, C64::new(1.0, 0.0));
        for _ in 0..n_sites {
            let mut next = Array1::zeros(amps.len() * d);
            for (i, a) in amps.iter().enumerate() {
                for (k, b) in local.iter().enumerate() {
                    next[i * d + k] = a * b;
                }
            }
            amps = next;
        }
        debug_assert_eq!(amps.len(), dim);
        Self::new(n_sites, d, amps)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }
}

/// `out += coeff * op(site)` applied to `psi`, with `op` acting on one
/// factor of the product basis.
fn apply_local(
    op: &Array2<C64>,
    site: usize,
    n_sites: usize,
    psi: &[C64],
    out: &mut [C64],
    coeff: C64,
) {
    let d = op.nrows();
    let right = d.pow((n_sites - site - 1) as u32);
    let left = psi.len() / (d * right);
    for l in 0..left {
        for r in 0..right {
            let base = l * d * right + r;
            for a in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for b in 0..d {
                    let m = op[[a, b]];
                    if m != C64::new(0.0, 0.0) {
                        acc += m * psi[base + b * right];
                    }
                }
                out[base + a * right] += coeff * acc;
            }
        }
    }
}

/// Matrix-free many-body generator.
#[derive(Debug, Clone)]
pub struct ManyBodyGenerator {
    n_sites: usize,
    dim: usize,
    h0: Array2<C64>,
    h1: Vec<Array2<C64>>,
    lambda: f64,
}

impl ManyBodyGenerator {
    pub fn new(spec: &ModelSpec, n_sites: usize) -> Result<Self> {
        let dim = product_dim(spec.dim(), n_sites)?;
        Ok(Self {
            n_sites,
            dim,
            h0: spec.h0().matrix().clone(),
            h1: spec.h1().iter().map(|op| op.matrix().clone()).collect(),
            lambda: spec.lambda(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `sum_j H1_a(j) psi`.
    fn collective(&self, a: usize, psi: &[C64], out: &mut [C64]) {
        out.fill(C64::new(0.0, 0.0));
        for j in 0..self.n_sites {
            apply_local(&self.h1[a], j, self.n_sites, psi, out, C64::new(1.0, 0.0));
        }
    }

    /// `out = H psi`.
    pub fn apply(&self, psi: &[C64], out: &mut [C64]) {
        out.fill(C64::new(0.0, 0.0));
        for j in 0..self.n_sites {
            apply_local(&self.h0, j, self.n_sites, psi, out, C64::new(1.0, 0.0));
        }
        let mut once = vec![C64::new(0.0, 0.0); self.dim];
        let mut twice = vec![C64::new(0.0, 0.0); self.dim];
        let c = -self.lambda / (2.0 * self.n_sites as f64);
        for a in 0..self.h1.len() {
            self.collective(a, psi, &mut once);
            self.collective(a, &once, &mut twice);
            for (o, t) in out.iter_mut().zip(&twice) {
                *o += t * c;
            }
        }
    }

    pub fn expectation(&self, psi: &[C64]) -> f64 {
        let mut h_psi = vec![C64::new(0.0, 0.0); self.dim];
        self.apply(psi, &mut h_psi);
        psi.iter().zip(&h_psi).map(|(p, h)| (p.conj() * h).re).sum()
    }
}

/// Dense many-body Hamiltonian by Kronecker lifting.
pub fn build_full_hamiltonian(spec: &ModelSpec, n_sites: usize) -> Result<HermitianOperator> {
    let generator = ManyBodyGenerator::new(spec, n_sites)?;
    let dim = generator.dim();
    if dim > DENSE_LIMIT {
        return Err(Error::Budget {
            dim,
            budget: DENSE_LIMIT,
        });
    }
    let mut h = Array2::<C64>::zeros((dim, dim));
    let mut unit = vec![C64::new(0.0, 0.0); dim];
    let mut column = vec![C64::new(0.0, 0.0); dim];
    for k in 0..dim {
        unit[k] = C64::new(1.0, 0.0);
        generator.apply(&unit, &mut column);
        unit[k] = C64::new(0.0, 0.0);
        for (i, v) in column.iter().enumerate() {
            h[[i, k]] = *v;
        }
    }
    HermitianOperator::new(h)
}

/// Reduced density matrix of the listed sites, in the order given.
pub fn reduced_density(state: &ManyBodyState, sites: &[usize]) -> Result<Array2<C64>> {
    let (n, d) = (state.n_sites, state.local_dim);
    if sites.is_empty() || sites.iter().any(|&s| s >= n) {
        return Err(invalid(
            "sites",
            format!("must be non-empty indices below {n}"),
        ));
    }
    for (i, a) in sites.iter().enumerate() {
        if sites[i + 1..].contains(a) {
            return Err(invalid("sites", "indices must be distinct"));
        }
    }
    let kept = d.pow(sites.len() as u32);
    let mut rho = Array2::<C64>::zeros((kept, kept));
    // group amplitudes by the traced-out digits
    let rest_dim = state.dim() / kept;
    let mut table = Array2::<C64>::zeros((rest_dim, kept));
    let mut digits = vec![0usize; n];
    for (idx, amp) in state.amplitudes.iter().enumerate() {
        let mut x = idx;
        for s in (0..n).rev() {
            digits[s] = x % d;
            x /= d;
        }
        let mut sys = 0;
        for &s in sites {
            sys = sys * d + digits[s];
        }
        let mut rest = 0;
        for (s, &digit) in digits.iter().enumerate() {
            if !sites.contains(&s) {
                rest = rest * d + digit;
            }
        }
        table[[rest, sys]] = *amp;
    }
    for r in 0..rest_dim {
        for a in 0..kept {
            let ta = table[[r, a]];
            if ta == C64::new(0.0, 0.0) {
                continue;
            }
            for b in 0..kept {
                rho[[a, b]] += ta * table[[r, b]].conj();
            }
        }
    }
    Ok(rho)
}

/// Frobenius norm of `rho_xy - rho_x ⊗ rho_y`.
pub fn connected_correlator_norm(state: &ManyBodyState, x: usize, y: usize) -> Result<f64> {
    let pair = reduced_density(state, &[x, y])?;
    let rx = reduced_density(state, &[x])?;
    let ry = reduced_density(state, &[y])?;
    let d = state.local_dim;
    let mut total = 0.0;
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for e in 0..d {
                    let diff = pair[[a * d + b, c * d + e]] - rx[[a, c]] * ry[[b, e]];
                    total += diff.norm_sqr();
                }
            }
        }
    }
    Ok(total.sqrt())
}

fn site_expectations(state: &ManyBodyState, op: &Array2<C64>) -> Result<Vec<f64>> {
    (0..state.n_sites)
        .map(|j| {
            let rho = reduced_density(state, &[j])?;
            let d = state.local_dim;
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..d {
                for b in 0..d {
                    acc += rho[[a, b]] * op[[b, a]];
                }
            }
            Ok(acc.re)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub dt: f64,
    pub t_max: f64,
    pub record_stride: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_max: 5.0,
            record_stride: 10,
        }
    }
}

impl OracleConfig {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.t_max >= self.dt) || !self.t_max.is_finite() {
            return Err(invalid("t_max", "must be >= dt"));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride", "must be positive"));
        }
        Ok(())
    }

    fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRecord {
    pub times: Vec<f64>,
    /// `(1/N) sum_j <H1_a(j)>` for each coupling component.
    pub mu: Vec<Vec<f64>>,
    /// `<H1_0(j)>` for every site.
    pub site_mu: Vec<Vec<f64>>,
    /// Connected correlator norm of sites 0 and 1; zero for one site.
    pub corr_norm: Vec<f64>,
    pub norm_err: Vec<f64>,
    pub energy: Vec<f64>,
}

impl OracleRecord {
    pub fn mu_component(&self, a: usize) -> Vec<f64> {
        self.mu.iter().map(|m| m[a]).collect()
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
            / e0.abs().max(1.0)
    }
}

fn record_sample(
    out: &mut OracleRecord,
    spec: &ModelSpec,
    generator: &ManyBodyGenerator,
    state: &ManyBodyState,
    time: f64,
) -> Result<()> {
    let norm: f64 = state.amplitudes.iter().map(|z| z.norm_sqr()).sum();
    let norm_err = (norm - 1.0).abs();
    if !(norm_err <= NORM_TOLERANCE) {
        return Err(Error::NumericalIntegrity(format!(
            "many-body norm drift {norm_err:.3e} at t = {time}"
        )));
    }
    let n = state.n_sites as f64;
    let mut mu = Vec::with_capacity(spec.h1().len());
    let mut site_mu = Vec::new();
    for (a, op) in spec.h1().iter().enumerate() {
        let per_site = site_expectations(state, op.matrix())?;
        mu.push(per_site.iter().sum::<f64>() / n);
        if a == 0 {
            site_mu = per_site;
        }
    }
    let corr = if state.n_sites >= 2 {
        connected_correlator_norm(state, 0, 1)?
    } else {
        0.0
    };
    out.times.push(time);
    out.mu.push(mu);
    out.site_mu.push(site_mu);
    out.corr_norm.push(corr);
    out.norm_err.push(norm_err);
    out.energy
        .push(generator.expectation(state.amplitudes.as_slice().unwrap()));
    Ok(())
}

/// Classic RK4 on `i psi' = H psi`; `on_step` sees the state after every
/// step.
fn propagate_rk4<F>(
    generator: &ManyBodyGenerator,
    psi0: &[C64],
    dt: f64,
    n_steps: usize,
    mut on_step: F,
) -> Result<()>
where
    F: FnMut(usize, &[C64]) -> Result<()>,
{
    let dim = generator.dim();
    let mut psi = psi0.to_vec();
    let mut k = vec![vec![C64::new(0.0, 0.0); dim]; 4];
    let mut tmp = vec![C64::new(0.0, 0.0); dim];
    let minus_i = C64::new(0.0, -1.0);
    for step in 1..=n_steps {
        for stage in 0..4 {
            if stage == 0 {
                tmp.copy_from_slice(&psi);
            } else {
                let h = if stage == 3 { dt } else { 0.5 * dt };
                for i in 0..dim {
                    tmp[i] = psi[i] + k[stage - 1][i] * h;
                }
            }
            generator.apply(&tmp, &mut k[stage]);
            k[stage].iter_mut().for_each(|v| *v *= minus_i);
        }
        for i in 0..dim {
            psi[i] += (k[0][i] + k[1][i] * 2.0 + k[2][i] * 2.0 + k[3][i]) * (dt / 6.0);
        }
        if psi.iter().any(|z| !z.is_finite()) {
            return Err(Error::IntegrationFailure {
                time: step as f64 * dt,
                reason: "many-body state became non-finite; use a smaller dt".into(),
            });
        }
        on_step(step, &psi)?;
    }
    Ok(())
}

/// Evolve a pure many-body state under the full Hamiltonian of `spec`.
pub fn exact_evolve(
    spec: &ModelSpec,
    state0: &ManyBodyState,
    cfg: &OracleConfig,
) -> Result<OracleRecord> {
    cfg.validate()?;
    if state0.local_dim != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: state0.local_dim,
        });
    }
    let generator = ManyBodyGenerator::new(spec, state0.n_sites)?;
    let mut out = OracleRecord {
        times: Vec::new(),
        mu: Vec::new(),
        site_mu: Vec::new(),
        corr_norm: Vec::new(),
        norm_err: Vec::new(),
        energy: Vec::new(),
    };
    record_sample(&mut out, spec, &generator, state0, 0.0)?;
    let n_steps = cfg.n_steps();
    let sample_steps: Vec<usize> = (1..=n_steps)
        .filter(|k| k % cfg.record_stride == 0 || *k == n_steps)
        .collect();
    let mut state = state0.clone();
    if generator.dim() <= DENSE_LIMIT {
        let h = build_full_hamiltonian(spec, state0.n_sites)?;
        let (energies, vectors) = h
            .matrix()
            .eigh(UPLO::Upper)
            .map_err(|e| Error::EigenSolver(e.to_string()))?;
        let coeffs: Array1<C64> = vectors.t().mapv(|z| z.conj()).dot(&state0.amplitudes);
        for &k in &sample_steps {
            let t = k as f64 * cfg.dt;
            let phased: Array1<C64> = coeffs
                .iter()
                .zip(energies.iter())
                .map(|(c, &e)| c * C64::from_polar(1.0, -e * t))
                .collect();
            state.amplitudes = vectors.dot(&phased);
            record_sample(&mut out, spec, &generator, &state, t)?;
        }
    } else {
        propagate_rk4(
            &generator,
            state0.amplitudes.as_slice().unwrap(),
            cfg.dt,
            n_steps,
            |step, psi| {
                if sample_steps.binary_search(&step).is_ok() {
                    state.amplitudes = Array1::from(psi.to_vec());
                    record_sample(&mut out, spec, &generator, &state, step as f64 * cfg.dt)?;
                }
                Ok(())
            },
        )?;
    }
    Ok(out)
}

/// Exact `N`-site run next to the mean-field run from the same site state.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub n_sites: usize,
    pub times: Vec<f64>,
    pub mu_exact: Vec<f64>,
    pub mu_mf: Vec<f64>,
    pub corr_norm: Vec<f64>,
    pub exact: OracleRecord,
}

impl OracleComparison {
    pub fn max_deviation(&self) -> f64 {
        self.mu_exact
            .iter()
            .zip(&self.mu_mf)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Correlator norm at the sample closest to `t`.
    pub fn corr_norm_at(&self, t: f64) -> f64 {
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map_or(0, |(k, _)| k);
        self.corr_norm[k]
    }
}

/// Run the exact oracle and the mean-field flow side by side on the same
/// sample times.
pub fn compare_with_mean_field(
    spec: &ModelSpec,
    local: &Array1<C64>,
    n_sites: usize,
    cfg: &OracleConfig,
) -> Result<OracleComparison> {
    let state = ManyBodyState::product(local, n_sites)?;
    let exact = exact_evolve(spec, &state, cfg)?;
    let mf_cfg = IntegratorConfig {
        dt: cfg.dt,
        t_max: cfg.t_max,
        record_stride: cfg.record_stride,
        propagation: Propagation::PureState,
        ..IntegratorConfig::default()
    };
    let rho0 = crate::operators::DensityMatrix::pure(local)?;
    let mf = evolve(spec, &rho0, &mf_cfg)?;
    if mf.times.len() != exact.times.len() {
        return Err(Error::Diagnostics(format!(
            "sample grids differ: {} mean-field vs {} exact samples",
            mf.times.len(),
            exact.times.len()
        )));
    }
    Ok(OracleComparison {
        n_sites,
        times: exact.times.clone(),
        mu_exact: exact.mu_component(0),
        mu_mf: mf.mu_component(0),
        corr_norm: exact.corr_norm.clone(),
        exact,
    })
}
