// SPDX-License-Identifier: Apache-2.0

//! Self-consistent mean-field evolution of the single-site state.
//!
//! The state obeys `i d rho/dt = [H(mu), rho]` with `mu_a = tr(rho H1_a)`
//! re-evaluated from the current state, so the flow is nonlinear in `rho`.
//! Integration is classical RK4 on that nonlinear flow: every stage
//! recomputes `mu` from its own stage state. After each step the state is
//! projected back onto unit trace and hermiticity, and the size of that
//! correction is logged so drift stays visible.
//!
//! Pure initial states are propagated as state vectors (`i d psi/dt = H psi`),
//! which is the same flow restricted to `rho = |psi><psi|` at `O(dim)` cost
//! per stage for tridiagonal models. Mixed states use the full
//! density-matrix path.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::GeneratorKernel;
use crate::operators::{expectation, DensityMatrix, HermitianOperator, ModelSpec, ModelTag, C64};
use crate::signal::trapezoid_window;

/// How `evolve` represents the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    /// State vector when the initial state is pure, density matrix otherwise.
    Auto,
    DensityMatrix,
    PureState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_max: f64,
    pub record_stride: usize,
    /// Allowed `|eps(t) - eps(0)| / max(1, |eps(0)|)`.
    pub energy_tolerance: f64,
    pub trace_tolerance: f64,
    pub hermiticity_tolerance: f64,
    /// Rotor only: bound on the population of the outermost 10% of levels.
    pub edge_population_limit: f64,
    pub propagation: Propagation,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_max: 100.0,
            record_stride: 50,
            energy_tolerance: 1e-7,
            trace_tolerance: 1e-8,
            hermiticity_tolerance: 1e-8,
            edge_population_limit: 1e-6,
            propagation: Propagation::Auto,
        }
    }
}

/// Largest time step `evolve` accepts.
pub const MAX_DT: f64 = 0.05;

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(invalid(
                "dt",
                format!("{} must lie in (0, {MAX_DT}]", self.dt),
            ));
        }
        if !(self.t_max >= self.dt) || !self.t_max.is_finite() {
            return Err(invalid("t_max", format!("{} must be >= dt", self.t_max)));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride", "must be positive"));
        }
        for (name, v) in [
            ("energy_tolerance", self.energy_tolerance),
            ("trace_tolerance", self.trace_tolerance),
            ("hermiticity_tolerance", self.hermiticity_tolerance),
            ("edge_population_limit", self.edge_population_limit),
        ] {
            if !(v > 0.0) {
                return Err(invalid(name, format!("{v} must be positive")));
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

/// Recorded samples of one mean-field run.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// `mu[k][a]` is component `a` at `times[k]`.
    pub mu: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    /// Largest pre-correction `|tr rho - 1|` since the previous sample.
    pub trace_err: Vec<f64>,
    /// Largest pre-correction `max |rho - rho^†|` since the previous sample.
    pub herm_err: Vec<f64>,
    pub purity: Vec<f64>,
    /// Max-norm of the parity-odd block of `rho`.
    pub parity_odd: Vec<f64>,
    /// Rotor only: population of the outermost 10% of levels.
    pub edge_population: Vec<f64>,
    pub final_state: DensityMatrix,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn mu_component(&self, a: usize) -> Vec<f64> {
        self.mu.iter().map(|v| v[a]).collect()
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_trace_err(&self) -> f64 {
        self.trace_err.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_herm_err(&self) -> f64 {
        self.herm_err.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_parity_odd(&self) -> f64 {
        self.parity_odd.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_purity_drift(&self) -> f64 {
        let p0 = self.purity[0];
        self.purity
            .iter()
            .map(|p| (p - p0).abs())
            .fold(0.0, f64::max)
    }
}

/// Borrowed view of the propagated state handed to observers.
pub enum StateView<'a> {
    Pure(&'a [C64]),
    Mixed(ArrayView2<'a, C64>),
}

impl StateView<'_> {
    pub fn to_density_matrix(&self) -> DensityMatrix {
        match self {
            StateView::Pure(psi) => {
                let n = psi.len();
                DensityMatrix::from_raw(Array2::from_shape_fn((n, n), |(i, j)| {
                    psi[i] * psi[j].conj()
                }))
            }
            StateView::Mixed(rho) => DensityMatrix::from_raw(rho.to_owned()),
        }
    }
}

/// `H0 - lambda * sum_a mu[a] H1_a`.
pub fn effective_hamiltonian(spec: &ModelSpec, mu: &[f64]) -> Result<HermitianOperator> {
    if mu.len() != spec.h1().len() {
        return Err(Error::DimensionMismatch {
            expected: spec.h1().len(),
            found: mu.len(),
        });
    }
    let mut h = spec.h0().clone();
    for (op, &m) in spec.h1().iter().zip(mu) {
        h = h.add_scaled(-spec.lambda() * m, op)?;
    }
    Ok(h)
}

/// `mu_a = tr(rho H1_a)` for every coupling operator.
pub fn order_parameter(rho: &DensityMatrix, spec: &ModelSpec) -> Result<Vec<f64>> {
    spec.h1().iter().map(|op| expectation(rho, op)).collect()
}

/// Conserved energy density `tr(rho H0) - (lambda/2) sum_a mu_a^2`.
pub fn energy_density(rho: &DensityMatrix, spec: &ModelSpec) -> Result<f64> {
    let mu = order_parameter(rho, spec)?;
    let kinetic = expectation(rho, spec.h0())?;
    Ok(kinetic - 0.5 * spec.lambda() * mu.iter().map(|m| m * m).sum::<f64>())
}

fn edge_mask(spec: &ModelSpec) -> Option<Vec<usize>> {
    match spec.tag() {
        ModelTag::Rotor { l_max, .. } => {
            let cut = 0.9 * l_max as f64;
            Some(
                spec.basis_labels()
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| (l as f64).abs() > cut)
                    .map(|(i, _)| i)
                    .collect(),
            )
        }
        ModelTag::WModel { .. } => None,
    }
}

/// Integrate the mean-field flow from `rho0` and record diagnostics.
pub fn evolve(
    spec: &ModelSpec,
    rho0: &DensityMatrix,
    cfg: &IntegratorConfig,
) -> Result<TrajectoryRecord> {
    evolve_observed(spec, rho0, cfg, |_, _| {})
}

/// [`evolve`], additionally handing every recorded state to `observer`.
pub fn evolve_observed<F>(
    spec: &ModelSpec,
    rho0: &DensityMatrix,
    cfg: &IntegratorConfig,
    mut observer: F,
) -> Result<TrajectoryRecord>
where
    F: FnMut(f64, StateView<'_>),
{
    cfg.validate()?;
    if rho0.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: rho0.dim(),
        });
    }
    check_stability(spec, cfg)?;
    let pure = match cfg.propagation {
        Propagation::DensityMatrix => None,
        Propagation::PureState => Some(rho0.pure_vector().ok_or_else(|| {
            Error::InvalidState("pure-state propagation requested for a mixed state".into())
        })?),
        Propagation::Auto => rho0.pure_vector(),
    };
    let run = Recorder::new(spec, cfg);
    match pure {
        Some(psi) => run.pure(psi, &mut observer),
        None => run.mixed(rho0.matrix().clone(), &mut observer),
    }
}

fn check_stability(spec: &ModelSpec, cfg: &IntegratorConfig) -> Result<()> {
    // RK4 is stable on the imaginary axis up to |z| = 2 sqrt(2)
    let bound = spec.h0().row_sum_norm()
        + spec.lambda()
            * spec
                .h1()
                .iter()
                .map(|op| op.row_sum_norm().powi(2))
                .sum::<f64>();
    if cfg.dt * bound > 2.5 {
        return Err(Error::IntegrationFailure {
            time: 0.0,
            reason: format!(
                "dt = {} exceeds the RK4 stability limit {:.3e} for this generator; use a smaller dt",
                cfg.dt,
                2.5 / bound
            ),
        });
    }
    Ok(())
}

struct Recorder<'a> {
    spec: &'a ModelSpec,
    cfg: &'a IntegratorConfig,
    kernel: GeneratorKernel,
    edges: Option<Vec<usize>>,
    rec: Partial,
    energy0: Option<f64>,
}

#[derive(Default)]
struct Partial {
    times: Vec<f64>,
    mu: Vec<Vec<f64>>,
    energy: Vec<f64>,
    trace_err: Vec<f64>,
    herm_err: Vec<f64>,
    purity: Vec<f64>,
    parity_odd: Vec<f64>,
    edge_population: Vec<f64>,
}

struct Sample {
    time: f64,
    mu: Vec<f64>,
    energy: f64,
    trace_err: f64,
    herm_err: f64,
    purity: f64,
    parity_odd: f64,
    edge: f64,
}

impl<'a> Recorder<'a> {
    fn new(spec: &'a ModelSpec, cfg: &'a IntegratorConfig) -> Self {
        Self {
            spec,
            cfg,
            kernel: GeneratorKernel::new(spec),
            edges: edge_mask(spec),
            rec: Partial::default(),
            energy0: None,
        }
    }

    fn push(&mut self, s: Sample) -> Result<()> {
        let finite = s.energy.is_finite() && s.mu.iter().all(|m| m.is_finite());
        if !finite {
            return Err(Error::IntegrationFailure {
                time: s.time,
                reason: "state became non-finite; use a smaller dt".into(),
            });
        }
        let e0 = *self.energy0.get_or_insert(s.energy);
        let drift = (s.energy - e0).abs();
        if drift > self.cfg.energy_tolerance * e0.abs().max(1.0) {
            return Err(Error::IntegrationFailure {
                time: s.time,
                reason: format!(
                    "energy drift {drift:.3e} exceeds tolerance {:.1e}; use a smaller dt",
                    self.cfg.energy_tolerance
                ),
            });
        }
        if s.trace_err > self.cfg.trace_tolerance || s.herm_err > self.cfg.hermiticity_tolerance {
            return Err(Error::IntegrationFailure {
                time: s.time,
                reason: format!(
                    "trace defect {:.3e} / hermiticity defect {:.3e} above tolerance; use a smaller dt",
                    s.trace_err, s.herm_err
                ),
            });
        }
        if let ModelTag::Rotor { l_max, .. } = self.spec.tag() {
            if s.edge > self.cfg.edge_population_limit {
                return Err(Error::Truncation {
                    time: s.time,
                    population: s.edge,
                    limit: self.cfg.edge_population_limit,
                    l_max,
                });
            }
        }
        let r = &mut self.rec;
        r.times.push(s.time);
        r.mu.push(s.mu);
        r.energy.push(s.energy);
        r.trace_err.push(s.trace_err);
        r.herm_err.push(s.herm_err);
        r.purity.push(s.purity);
        r.parity_odd.push(s.parity_odd);
        r.edge_population.push(s.edge);
        Ok(())
    }

    fn finish(self, final_state: DensityMatrix) -> TrajectoryRecord {
        let r = self.rec;
        TrajectoryRecord {
            times: r.times,
            mu: r.mu,
            energy: r.energy,
            trace_err: r.trace_err,
            herm_err: r.herm_err,
            purity: r.purity,
            parity_odd: r.parity_odd,
            edge_population: r.edge_population,
            final_state,
        }
    }

    fn energy_of(&self, h0: f64, mu: &[f64]) -> f64 {
        h0 - 0.5 * self.spec.lambda() * mu.iter().map(|m| m * m).sum::<f64>()
    }

    fn pure<F>(mut self, psi0: Array1<C64>, observer: &mut F) -> Result<TrajectoryRecord>
    where
        F: FnMut(f64, StateView<'_>),
    {
        let n = self.kernel.dim();
        let na = self.kernel.n_couplings();
        let dt = self.cfg.dt;
        let steps = self.cfg.n_steps();
        let stride = self.cfg.record_stride;
        let perm = self.spec.parity_map().to_vec();

        let mut psi: Vec<C64> = psi0.to_vec();
        let mut stage = vec![C64::new(0.0, 0.0); n];
        let mut k = [
            vec![C64::new(0.0, 0.0); n],
            vec![C64::new(0.0, 0.0); n],
            vec![C64::new(0.0, 0.0); n],
            vec![C64::new(0.0, 0.0); n],
        ];
        let mut mu = vec![0.0; na];
        let mut worst_trace = 0.0_f64;

        for step in 0..=steps {
            if step % stride == 0 {
                let time = step as f64 * dt;
                self.kernel.mu_pure(&psi, &mut mu);
                let h0 = self.kernel.h0_pure(&psi);
                let sample = Sample {
                    time,
                    mu: mu.clone(),
                    energy: self.energy_of(h0, &mu),
                    trace_err: worst_trace,
                    herm_err: 0.0,
                    purity: psi.iter().map(|z| z.norm_sqr()).sum::<f64>().powi(2),
                    parity_odd: pure_parity_odd(&psi, &perm),
                    edge: self
                        .edges
                        .as_ref()
                        .map_or(0.0, |e| e.iter().map(|&i| psi[i].norm_sqr()).sum()),
                };
                self.push(sample)?;
                observer(time, StateView::Pure(&psi));
                worst_trace = 0.0;
            }
            if step == steps {
                break;
            }

            let half = 0.5 * dt;
            let rhs = |kernel: &mut GeneratorKernel, x: &[C64], mu: &mut [f64], out: &mut [C64]| {
                kernel.mu_pure(x, mu);
                kernel.assemble(mu);
                kernel.schrodinger_rhs(x, out);
            };
            rhs(&mut self.kernel, &psi, &mut mu, &mut k[0]);
            for i in 0..n {
                stage[i] = psi[i] + k[0][i] * half;
            }
            rhs(&mut self.kernel, &stage, &mut mu, &mut k[1]);
            for i in 0..n {
                stage[i] = psi[i] + k[1][i] * half;
            }
            rhs(&mut self.kernel, &stage, &mut mu, &mut k[2]);
            for i in 0..n {
                stage[i] = psi[i] + k[2][i] * dt;
            }
            rhs(&mut self.kernel, &stage, &mut mu, &mut k[3]);
            let sixth = dt / 6.0;
            for i in 0..n {
                psi[i] += (k[0][i] + (k[1][i] + k[2][i]) * 2.0 + k[3][i]) * sixth;
            }
            let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            worst_trace = worst_trace.max((norm2 - 1.0).abs());
            let scale = 1.0 / norm2.sqrt();
            psi.iter_mut().for_each(|z| *z *= scale);
        }
        let final_state = StateView::Pure(&psi).to_density_matrix();
        Ok(self.finish(final_state))
    }

    fn mixed<F>(mut self, rho0: Array2<C64>, observer: &mut F) -> Result<TrajectoryRecord>
    where
        F: FnMut(f64, StateView<'_>),
    {
        let n = self.kernel.dim();
        let na = self.kernel.n_couplings();
        let dt = self.cfg.dt;
        let steps = self.cfg.n_steps();
        let stride = self.cfg.record_stride;
        let perm = self.spec.parity_map().to_vec();

        let zero = || Array2::<C64>::zeros((n, n));
        let mut rho = rho0;
        let mut stage = zero();
        let mut scratch = zero();
        let mut k = [zero(), zero(), zero(), zero()];
        let mut mu = vec![0.0; na];
        let mut worst_trace = 0.0_f64;
        let mut worst_herm = 0.0_f64;

        for step in 0..=steps {
            if step % stride == 0 {
                let time = step as f64 * dt;
                self.kernel.mu_mixed(rho.view(), &mut mu);
                let h0 = self.kernel.h0_mixed(rho.view());
                let view = DensityMatrix::from_raw(rho.clone());
                let sample = Sample {
                    time,
                    mu: mu.clone(),
                    energy: self.energy_of(h0, &mu),
                    trace_err: worst_trace,
                    herm_err: worst_herm,
                    purity: view.purity(),
                    parity_odd: view.parity_odd_norm(&perm),
                    edge: self
                        .edges
                        .as_ref()
                        .map_or(0.0, |e| e.iter().map(|&i| rho[[i, i]].re).sum()),
                };
                self.push(sample)?;
                observer(time, StateView::Mixed(rho.view()));
                worst_trace = 0.0;
                worst_herm = 0.0;
            }
            if step == steps {
                break;
            }

            let half = 0.5 * dt;
            let mut rhs =
                |kernel: &mut GeneratorKernel, x: ArrayView2<C64>, out: &mut Array2<C64>| {
                    kernel.mu_mixed(x, &mut mu);
                    kernel.assemble(&mu);
                    kernel.von_neumann_rhs(x, &mut scratch, out.view_mut());
                };
            rhs(&mut self.kernel, rho.view(), &mut k[0]);
            ndarray::Zip::from(&mut stage)
                .and(&rho)
                .and(&k[0])
                .for_each(|s, &r, &d| *s = r + d * half);
            rhs(&mut self.kernel, stage.view(), &mut k[1]);
            ndarray::Zip::from(&mut stage)
                .and(&rho)
                .and(&k[1])
                .for_each(|s, &r, &d| *s = r + d * half);
            rhs(&mut self.kernel, stage.view(), &mut k[2]);
            ndarray::Zip::from(&mut stage)
                .and(&rho)
                .and(&k[2])
                .for_each(|s, &r, &d| *s = r + d * dt);
            rhs(&mut self.kernel, stage.view(), &mut k[3]);
            let sixth = dt / 6.0;
            let [k0, k1, k2, k3] = &k;
            ndarray::Zip::from(&mut rho)
                .and(k0)
                .and(k1)
                .and(k2)
                .for_each(|r, &a, &b, &c| *r += (a + (b + c) * 2.0) * sixth);
            ndarray::Zip::from(&mut rho)
                .and(k3)
                .for_each(|r, &d| *r += d * sixth);

            let mut defect = 0.0_f64;
            for i in 0..n {
                for j in i..n {
                    let a = rho[[i, j]];
                    let b = rho[[j, i]];
                    defect = defect.max((a - b.conj()).norm());
                    let sym = (a + b.conj()) * 0.5;
                    rho[[i, j]] = sym;
                    rho[[j, i]] = sym.conj();
                }
            }
            let trace: f64 = rho.diag().iter().map(|z| z.re).sum();
            worst_herm = worst_herm.max(defect);
            worst_trace = worst_trace.max((trace - 1.0).abs());
            rho.mapv_inplace(|z| z / trace);
        }
        Ok(self.finish(DensityMatrix::from_raw(rho)))
    }
}

fn pure_parity_odd(psi: &[C64], perm: &[usize]) -> f64 {
    // (rho - P rho P)/2 with rho = psi psi^† equals e o^† + o e^†
    let n = psi.len();
    let even: Vec<C64> = (0..n).map(|i| (psi[i] + psi[perm[i]]) * 0.5).collect();
    let odd: Vec<C64> = (0..n).map(|i| (psi[i] - psi[perm[i]]) * 0.5).collect();
    let max_odd = odd.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max_odd == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((even[i] * odd[j].conj() + odd[i] * even[j].conj()).norm());
        }
    }
    worst
}

/// Rotor run that doubles `l_max` until the edge population stays below the
/// configured limit. `build` receives the truncation and returns the model
/// and initial state for it. Returns the accepted record and truncation.
pub fn evolve_rotor_adaptive<B>(
    mut build: B,
    l_max_start: u32,
    l_max_cap: u32,
    cfg: &IntegratorConfig,
) -> Result<(TrajectoryRecord, u32)>
where
    B: FnMut(u32) -> Result<(ModelSpec, DensityMatrix)>,
{
    let mut l_max = l_max_start.max(1);
    loop {
        let (spec, rho0) = build(l_max)?;
        match evolve(&spec, &rho0, cfg) {
            Err(Error::Truncation { .. }) if l_max < l_max_cap => {
                l_max = (2 * l_max).min(l_max_cap);
            }
            other => return other.map(|rec| (rec, l_max)),
        }
    }
}

/// Time-averaged order parameter over a window and the squared deviation
/// `A(t) = (mu(t) - mu_inf)^2` on that window.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeReport {
    pub mu_infinity: f64,
    pub times: Vec<f64>,
    pub a_of_t: Vec<f64>,
    pub t1: f64,
    pub t_max: f64,
}

impl AmplitudeReport {
    /// Time average of `A(t)` over `[t1, t_max]`.
    pub fn mean_amplitude(&self) -> f64 {
        trapezoid_window(&self.times, &self.a_of_t, self.t1, self.t_max) / (self.t_max - self.t1)
    }
}

/// Window average of the first order-parameter component and its squared
/// deviation on the window.
pub fn amplitude_diagnostic(
    traj: &TrajectoryRecord,
    t1: f64,
    t_max: f64,
) -> Result<AmplitudeReport> {
    amplitude_of_series(&traj.times, &traj.mu_component(0), t1, t_max)
}

/// [`amplitude_diagnostic`] on a bare `(times, values)` series.
pub fn amplitude_of_series(
    times: &[f64],
    values: &[f64],
    t1: f64,
    t_max: f64,
) -> Result<AmplitudeReport> {
    if !(t1 < t_max) {
        return Err(invalid(
            "t1",
            format!("window start {t1} must precede end {t_max}"),
        ));
    }
    let (start, end) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => {
            return Err(Error::Window {
                t1,
                t_max,
                start: f64::NAN,
                end: f64::NAN,
            })
        }
    };
    let eps = 1e-9 * t_max.abs().max(1.0);
    if start > t1 + eps || end < t_max - eps || times.len() < 2 {
        return Err(Error::Window {
            t1,
            t_max,
            start,
            end,
        });
    }
    let mu_infinity = trapezoid_window(times, values, t1, t_max) / (t_max - t1);
    let (times, a_of_t): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= t1 - eps && t <= t_max + eps)
        .map(|(&t, &m)| (t, (m - mu_infinity).powi(2)))
        .unzip();
    Ok(AmplitudeReport {
        mu_infinity,
        times,
        a_of_t,
        t1,
        t_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{
        build_rotor_model, build_w_model, gaussian_w_state, rotor_initial_state,
    };
    use approx::assert_abs_diff_eq;

    #[test]
    fn effective_hamiltonian_examples() {
        let spec = build_w_model(4, 1, 1.0).unwrap().with_lambda(2.0).unwrap();
        let h = effective_hamiltonian(&spec, &[0.0]).unwrap();
        assert_eq!(h, *spec.h0());
        let h = effective_hamiltonian(&spec, &[0.5]).unwrap();
        let diff = h.add_scaled(-1.0, spec.h0()).unwrap();
        for (i, &m) in spec.basis_labels().iter().enumerate() {
            let expected = if m.abs() <= 1 { -1.0 } else { 0.0 };
            assert_abs_diff_eq!(diff.matrix()[[i, i]].re, expected, epsilon = 1e-15);
        }
        // linearity
        let a = effective_hamiltonian(&spec, &[0.3]).unwrap();
        let b = effective_hamiltonian(&spec, &[0.45]).unwrap();
        let ab = effective_hamiltonian(&spec, &[0.75]).unwrap();
        let lhs = a
            .add_scaled(1.0, &b)
            .unwrap()
            .add_scaled(-1.0, spec.h0())
            .unwrap();
        assert!(lhs.max_abs_diff(&ab) < 1e-15);
        assert!(matches!(
            effective_hamiltonian(&spec, &[0.1, 0.2]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn order_parameter_gaussian_oracles() {
        let z: f64 = (-150..=150_i64)
            .map(|m| (-(m * m) as f64 / 2.0).exp())
            .sum();
        let rho = gaussian_w_state(150, 1.0).unwrap();
        let spec0 = build_w_model(150, 0, 1.0).unwrap();
        let mu = order_parameter(&rho, &spec0).unwrap();
        assert_abs_diff_eq!(mu[0], 1.0 / z, epsilon = 1e-13);
        assert_abs_diff_eq!(mu[0], 0.39894, epsilon = 1e-5);
        let spec1 = build_w_model(150, 1, 1.0).unwrap();
        let mu = order_parameter(&rho, &spec1).unwrap();
        assert_abs_diff_eq!(mu[0], (1.0 + 2.0 * (-0.5_f64).exp()) / z, epsilon = 1e-13);
        assert_abs_diff_eq!(mu[0], 0.8828, epsilon = 1e-4);
        let rotor = build_rotor_model(5).unwrap();
        let mu = order_parameter(&rotor_initial_state(5).unwrap(), &rotor).unwrap();
        assert_abs_diff_eq!(mu[0], 6.0 / 11.0, epsilon = 1e-14);
    }

    #[test]
    fn energy_density_examples() {
        let (s, w, lambda) = (8_u32, 2_u32, 1.7);
        let spec = build_w_model(s, w, 1.0)
            .unwrap()
            .with_lambda(lambda)
            .unwrap();
        let mixed = DensityMatrix::maximally_mixed(spec.dim()).unwrap();
        let frac = (2 * w + 1) as f64 / (2 * s + 1) as f64;
        assert_abs_diff_eq!(
            energy_density(&mixed, &spec).unwrap(),
            -0.5 * lambda * frac * frac,
            epsilon = 1e-14
        );
        let weak = spec.with_lambda(1e-14).unwrap();
        let rho = gaussian_w_state(s, 1.3).unwrap();
        assert_abs_diff_eq!(
            energy_density(&rho, &weak).unwrap(),
            expectation(&rho, spec.h0()).unwrap(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn stationary_eigenstate_stays_put() {
        // ground state of H0 for a w-model has mu != 0 in general; use the
        // rotor |L=1> - |L=-1> state: cos has zero expectation and the state
        // is an H0 eigenstate, and mu stays 0 because parity forbids it.
        let spec = build_rotor_model(6).unwrap().with_lambda(0.8).unwrap();
        let mut psi = Array1::zeros(13);
        psi[7] = C64::new(1.0, 0.0);
        psi[5] = C64::new(-1.0, 0.0);
        let rho0 = DensityMatrix::pure(&psi).unwrap();
        assert_abs_diff_eq!(
            order_parameter(&rho0, &spec).unwrap()[0],
            0.0,
            epsilon = 1e-15
        );
        let cfg = IntegratorConfig {
            dt: 0.01,
            t_max: 5.0,
            record_stride: 50,
            ..Default::default()
        };
        for prop in [Propagation::PureState, Propagation::DensityMatrix] {
            let rec = evolve(
                &spec,
                &rho0,
                &IntegratorConfig {
                    propagation: prop,
                    ..cfg.clone()
                },
            )
            .unwrap();
            for m in rec.mu_component(0) {
                assert!(m.abs() < 1e-14);
            }
            let p = rec.final_state.matrix();
            let drift = (p - rho0.matrix())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(drift < 1e-10, "drift {drift}");
        }
    }

    #[test]
    fn free_rotor_matches_closed_form() {
        let spec = build_rotor_model(8).unwrap().with_lambda(1e-14).unwrap();
        let rho0 = rotor_initial_state(8).unwrap();
        let cfg = IntegratorConfig {
            dt: 1e-3,
            t_max: 10.0,
            record_stride: 100,
            ..Default::default()
        };
        let rec = evolve(&spec, &rho0, &cfg).unwrap();
        for (t, m) in rec.times.iter().zip(rec.mu_component(0)) {
            assert_abs_diff_eq!(m, 6.0 / 11.0 * (t / 2.0).cos(), epsilon = 1e-9);
        }
    }

    #[test]
    fn pure_and_mixed_paths_agree() {
        let spec = build_w_model(12, 1, 1.0).unwrap().with_lambda(2.0).unwrap();
        let rho0 = gaussian_w_state(12, 1.0).unwrap();
        let cfg = IntegratorConfig {
            dt: 5e-3,
            t_max: 8.0,
            record_stride: 20,
            ..Default::default()
        };
        let a = evolve(
            &spec,
            &rho0,
            &IntegratorConfig {
                propagation: Propagation::PureState,
                ..cfg.clone()
            },
        )
        .unwrap();
        let b = evolve(
            &spec,
            &rho0,
            &IntegratorConfig {
                propagation: Propagation::DensityMatrix,
                ..cfg
            },
        )
        .unwrap();
        for (x, y) in a.mu_component(0).iter().zip(b.mu_component(0)) {
            // the two RK4 schemes differ at O(dt^4)
            assert_abs_diff_eq!(*x, y, epsilon = 1e-8);
        }
    }

    #[test]
    fn recorded_mu_is_self_consistent() {
        let spec = build_w_model(10, 1, 1.0).unwrap().with_lambda(1.5).unwrap();
        let rho0 = gaussian_w_state(10, 1.2).unwrap();
        let cfg = IntegratorConfig {
            dt: 1e-2,
            t_max: 3.0,
            record_stride: 25,
            ..Default::default()
        };
        for prop in [Propagation::PureState, Propagation::DensityMatrix] {
            let mut states = Vec::new();
            let rec = evolve_observed(
                &spec,
                &rho0,
                &IntegratorConfig {
                    propagation: prop,
                    ..cfg.clone()
                },
                |_, view| states.push(view.to_density_matrix()),
            )
            .unwrap();
            assert_eq!(states.len(), rec.len());
            for (rho, mu) in states.iter().zip(&rec.mu) {
                let again = order_parameter(rho, &spec).unwrap();
                assert_abs_diff_eq!(again[0], mu[0], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn config_validation() {
        let good = IntegratorConfig::default();
        assert!(good.validate().is_ok());
        assert!(IntegratorConfig {
            dt: 0.06,
            ..good.clone()
        }
        .validate()
        .is_err());
        assert!(IntegratorConfig {
            dt: 0.0,
            ..good.clone()
        }
        .validate()
        .is_err());
        assert!(IntegratorConfig {
            t_max: 1e-4,
            ..good.clone()
        }
        .validate()
        .is_err());
        assert!(IntegratorConfig {
            record_stride: 0,
            ..good
        }
        .validate()
        .is_err());
    }

    #[test]
    fn unstable_step_is_rejected() {
        let spec = build_rotor_model(200).unwrap();
        let rho0 = rotor_initial_state(200).unwrap();
        let cfg = IntegratorConfig {
            dt: 1e-3,
            t_max: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            evolve(&spec, &rho0, &cfg),
            Err(Error::IntegrationFailure { .. })
        ));
    }

    #[test]
    fn truncation_breach_is_reported_and_adaptive_recovers() {
        // strong coupling drives population outwards in a tiny truncation
        let cfg = IntegratorConfig {
            dt: 1e-3,
            t_max: 6.0,
            record_stride: 100,
            ..Default::default()
        };
        let build = |l: u32| -> Result<(ModelSpec, DensityMatrix)> {
            Ok((
                build_rotor_model(l)?.with_lambda(3.0)?,
                rotor_initial_state(l)?,
            ))
        };
        let (spec, rho0) = build(3).unwrap();
        assert!(matches!(
            evolve(&spec, &rho0, &cfg),
            Err(Error::Truncation { .. })
        ));
        let (rec, l_max) = evolve_rotor_adaptive(build, 3, 64, &cfg).unwrap();
        assert!(l_max > 3);
        assert!(rec.edge_population.iter().all(|&p| p <= 1e-6));
    }

    #[test]
    fn amplitude_constant_and_sine() {
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.05).collect();
        let c: Vec<f64> = times.iter().map(|_| 0.37).collect();
        let rep = amplitude_of_series(&times, &c, 60.0, 80.0).unwrap();
        assert_abs_diff_eq!(rep.mu_infinity, 0.37, epsilon = 1e-13);
        assert!(rep.a_of_t.iter().all(|&a| a < 1e-28));

        // four full periods of sin(omega t) on [60, 80]
        let omega = 2.0 * std::f64::consts::PI / 5.0;
        let s: Vec<f64> = times.iter().map(|t| (omega * t).sin()).collect();
        let rep = amplitude_of_series(&times, &s, 60.0, 80.0).unwrap();
        assert_abs_diff_eq!(rep.mu_infinity, 0.0, epsilon = 1e-12);
        // closed form: mean of sin^2 over whole periods is 1/2
        assert_abs_diff_eq!(rep.mean_amplitude(), 0.5, epsilon = 1e-3);
        assert!(rep.a_of_t.iter().all(|&a| a >= 0.0));
    }

    #[test]
    fn amplitude_window_errors() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        let v = vec![1.0; times.len()];
        assert!(matches!(
            amplitude_of_series(&times, &v, 60.0, 120.0),
            Err(Error::Window { .. })
        ));
        assert!(amplitude_of_series(&times, &v, 80.0, 60.0).is_err());
    }

    mod props {
        use super::*;
        use crate::operators::DensityMatrix;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]

            #[test]
            fn flow_preserves_invariants(
                s in 3u32..16,
                w in 0u32..3,
                lambda in 0.2f64..3.0,
                width in 0.5f64..2.0,
                p in 0.3f64..1.0,
            ) {
                let spec = build_w_model(s, w, 1.0).unwrap().with_lambda(lambda).unwrap();
                let g = gaussian_w_state(s, width).unwrap();
                let mix = DensityMatrix::maximally_mixed(spec.dim()).unwrap();
                let rho0 = DensityMatrix::new(g.matrix() * p + mix.matrix() * (1.0 - p)).unwrap();
                let cfg = IntegratorConfig { t_max: 2.0, record_stride: 20, ..Default::default() };
                let rec = evolve(&spec, &rho0, &cfg).unwrap();
                prop_assert!(rec.max_energy_drift() / rec.energy[0].abs().max(1.0) < 1e-7);
                prop_assert!(rec.max_trace_err() < 1e-8);
                prop_assert!(rec.max_herm_err() < 1e-8);
                prop_assert!(rec.max_parity_odd() < 1e-9);
                // the flow is unitary, so purity is conserved
                prop_assert!(rec.max_purity_drift() < 1e-8);
            }
        }
    }
}
