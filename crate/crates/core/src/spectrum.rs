// SPDX-License-Identifier: Apache-2.0

//! Bound states of the frozen single-site Hamiltonian `H0 - x H1`.
//!
//! For the w-model the spectrum of `H0` fills `[-h, h]` and becomes a
//! continuum as `s` grows; eigenvalues pushed below `-h` by the well are
//! bound. Their number, restricted to the parity sector reachable from the
//! initial state, predicts the late-time behaviour of the mean-field flow.
//! The rotor spectrum is discrete at every truncation, so every level
//! counts.
//!
//! Counting uses a Sturm sequence on the parity-reduced tridiagonal blocks
//! whenever the model has that structure, and a dense solve otherwise.

use log::warn;
use ndarray::Array2;
use ndarray_linalg::{EigValsh, Eigh, UPLO};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operators::{ModelSpec, ModelTag};

/// Margin below the band edge that keeps a level sitting exactly on the edge
/// (the `x = 0` ground state at finite `s`) out of the bound set.
pub const EDGE_MARGIN: f64 = 1e-9;

/// Parity expectations with smaller magnitude are flagged as ambiguous.
pub const PARITY_CONFIDENCE: f64 = 0.99;

/// Bisection stops once the bracket is this narrow.
pub const CRITICAL_X_RESOLUTION: f64 = 1e-4;

/// Largest admissible spacing of a critical-x scan grid.
pub const MAX_SCAN_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// How far below the band edge a level must lie to count as bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumOptions {
    /// Extra guard band below the edge. Zero keeps only [`EDGE_MARGIN`].
    pub edge_guard: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { edge_guard: 0.0 }
    }
}

impl SpectrumOptions {
    /// Guard band of three continuum spacings, `3/s`.
    pub fn finite_size(s: u32) -> Self {
        Self {
            edge_guard: 3.0 / s as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.edge_guard >= 0.0) || !self.edge_guard.is_finite() {
            return Err(invalid("edge_guard", "must be finite and non-negative"));
        }
        Ok(())
    }

    fn threshold(&self, edge: f64) -> f64 {
        edge - self.edge_guard.max(EDGE_MARGIN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundState {
    pub energy: f64,
    /// Position in the ascending spectrum.
    pub index: usize,
    pub parity: Parity,
    /// `<psi|P|psi>`; `+1` or `-1` for a clean parity eigenstate.
    pub parity_expectation: f64,
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub x: f64,
    /// Full spectrum, ascending.
    pub eigenvalues: Vec<f64>,
    /// `None` for a fully discrete spectrum.
    pub continuum_edge: Option<f64>,
    pub bound_states: Vec<BoundState>,
}

impl SpectrumReport {
    pub fn n_b_total(&self) -> usize {
        self.bound_states.len()
    }

    pub fn n_b_even(&self) -> usize {
        self.count(Parity::Even)
    }

    pub fn n_b_odd(&self) -> usize {
        self.count(Parity::Odd)
    }

    fn count(&self, parity: Parity) -> usize {
        self.bound_states
            .iter()
            .filter(|b| b.parity == parity)
            .count()
    }

    /// Ascending bound-state energies, optionally restricted to one parity.
    pub fn energies(&self, parity: Option<Parity>) -> Vec<f64> {
        self.bound_states
            .iter()
            .filter(|b| parity.is_none_or(|p| b.parity == p))
            .map(|b| b.energy)
            .collect()
    }
}

fn continuum_edge(spec: &ModelSpec) -> Option<f64> {
    match spec.tag() {
        ModelTag::WModel { h, .. } => Some(-h.abs()),
        ModelTag::Rotor { .. } => None,
    }
}

fn frozen_hamiltonian(spec: &ModelSpec, x: f64) -> Result<Array2<f64>> {
    let mut m = spec.h0().real_part();
    for op in spec.h1() {
        if op.max_imag() > 0.0 {
            return Err(Error::InvalidOperator(
                "bound-state analysis needs a real symmetric coupling".into(),
            ));
        }
        m.scaled_add(-x, &op.real_part());
    }
    if spec.h0().max_imag() > 0.0 {
        return Err(Error::InvalidOperator(
            "bound-state analysis needs a real symmetric H0".into(),
        ));
    }
    Ok(m)
}

fn check_x(x: f64) -> Result<()> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(invalid(
            "x",
            format!("well depth {x} must be finite and >= 0"),
        ));
    }
    Ok(())
}

/// Dense eigen-decomposition of `H0 - x H1` (all coupling components scaled
/// by the same `x`) with parity labels for the bound states.
pub fn diagonalize(spec: &ModelSpec, x: f64, options: &SpectrumOptions) -> Result<SpectrumReport> {
    check_x(x)?;
    options.validate()?;
    let m = frozen_hamiltonian(spec, x)?;
    let (values, vectors) = m
        .eigh(UPLO::Upper)
        .map_err(|e| Error::EigenSolver(e.to_string()))?;
    let edge = continuum_edge(spec);
    let cutoff = edge.map_or(f64::INFINITY, |e| options.threshold(e));
    let perm = spec.parity_map();
    let mut bound_states = Vec::new();
    for (index, &energy) in values.iter().enumerate() {
        if !(energy < cutoff) {
            break;
        }
        let v = vectors.column(index);
        let p: f64 = (0..v.len()).map(|i| v[i] * v[perm[i]]).sum();
        let ambiguous = p.abs() < PARITY_CONFIDENCE;
        if ambiguous {
            warn!("bound state {index} at x = {x} has parity expectation {p:.4}");
        }
        bound_states.push(BoundState {
            energy,
            index,
            parity: if p >= 0.0 { Parity::Even } else { Parity::Odd },
            parity_expectation: p,
            ambiguous,
        });
    }
    Ok(SpectrumReport {
        x,
        eigenvalues: values.to_vec(),
        continuum_edge: edge,
        bound_states,
    })
}

/// Symmetric tridiagonal matrix given by its diagonal and off-diagonal.
#[derive(Debug, Clone)]
struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl Tridiagonal {
    /// Number of eigenvalues strictly below `sigma`, from the signs of the
    /// `LDL^T` pivots of `T - sigma`.
    fn count_below(&self, sigma: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.diag.len() {
            let coupling = if i == 0 {
                0.0
            } else {
                self.off[i - 1] * self.off[i - 1] / q
            };
            q = self.diag[i] - sigma - coupling;
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }
}

/// Parity-reduced blocks of `H0 - x H1` for a reflection-symmetric
/// tridiagonal model, or `None` when the structure is absent.
///
/// With centre index `c`, the even block acts on `|c>` and
/// `(|c+k> + |c-k>)/sqrt(2)`, the odd block on `(|c+k> - |c-k>)/sqrt(2)`.
#[derive(Debug, Clone)]
struct ParityBlocks {
    /// Diagonal of `H0` and of each `H1_a`, from the centre outwards.
    h0_diag: Vec<f64>,
    h1_diag: Vec<Vec<f64>>,
    h0_off: Vec<f64>,
    h1_off: Vec<Vec<f64>>,
}

impl ParityBlocks {
    fn detect(spec: &ModelSpec) -> Option<Self> {
        let n = spec.dim();
        if n.is_multiple_of(2)
            || spec
                .parity_map()
                .iter()
                .enumerate()
                .any(|(i, &j)| j != n - 1 - i)
        {
            return None;
        }
        let mats: Vec<Array2<f64>> = std::iter::once(spec.h0())
            .chain(spec.h1())
            .map(|op| op.real_part())
            .collect();
        if spec.h0().max_imag() > 0.0 || spec.h1().iter().any(|op| op.max_imag() > 0.0) {
            return None;
        }
        for m in &mats {
            for i in 0..n {
                for j in 0..n {
                    if i.abs_diff(j) > 1 && m[[i, j]] != 0.0 {
                        return None;
                    }
                    if m[[i, j]] != m[[n - 1 - i, n - 1 - j]] {
                        return None;
                    }
                }
            }
        }
        let c = n / 2;
        let diag = |m: &Array2<f64>| (0..=c).map(|k| m[[c + k, c + k]]).collect::<Vec<_>>();
        let off = |m: &Array2<f64>| (0..c).map(|k| m[[c + k, c + k + 1]]).collect::<Vec<_>>();
        Some(Self {
            h0_diag: diag(&mats[0]),
            h1_diag: mats[1..].iter().map(diag).collect(),
            h0_off: off(&mats[0]),
            h1_off: mats[1..].iter().map(off).collect(),
        })
    }

    fn assemble(&self, x: f64) -> (Vec<f64>, Vec<f64>) {
        let mut diag = self.h0_diag.clone();
        let mut off = self.h0_off.clone();
        for (d1, o1) in self.h1_diag.iter().zip(&self.h1_off) {
            diag.iter_mut().zip(d1).for_each(|(d, v)| *d -= x * v);
            off.iter_mut().zip(o1).for_each(|(o, v)| *o -= x * v);
        }
        (diag, off)
    }

    fn block(&self, x: f64, parity: Parity) -> Tridiagonal {
        let (diag, mut off) = self.assemble(x);
        match parity {
            Parity::Even => {
                if let Some(first) = off.first_mut() {
                    *first *= std::f64::consts::SQRT_2;
                }
                Tridiagonal { diag, off }
            }
            Parity::Odd => Tridiagonal {
                diag: diag[1..].to_vec(),
                off: off[1..].to_vec(),
            },
        }
    }
}

/// Bound-state counter for one model at many well depths.
#[derive(Debug, Clone)]
pub struct BoundStateCounter {
    spec: ModelSpec,
    options: SpectrumOptions,
    blocks: Option<ParityBlocks>,
}

impl BoundStateCounter {
    pub fn new(spec: &ModelSpec, options: SpectrumOptions) -> Result<Self> {
        options.validate()?;
        Ok(Self {
            spec: spec.clone(),
            options,
            blocks: ParityBlocks::detect(spec),
        })
    }

    /// `(even, odd)` bound-state counts at depth `x`.
    pub fn count(&self, x: f64) -> Result<(usize, usize)> {
        check_x(x)?;
        let Some(edge) = continuum_edge(&self.spec) else {
            return self.count_discrete(x);
        };
        let sigma = self.options.threshold(edge);
        match &self.blocks {
            Some(blocks) => Ok((
                blocks.block(x, Parity::Even).count_below(sigma),
                blocks.block(x, Parity::Odd).count_below(sigma),
            )),
            None => {
                let r = diagonalize(&self.spec, x, &self.options)?;
                Ok((r.n_b_even(), r.n_b_odd()))
            }
        }
    }

    /// Ascending bound-state energies with their parities at depth `x`.
    ///
    /// On parity blocks each level is isolated by bisection on the Sturm
    /// count to absolute accuracy 1e-13; otherwise a dense solve is used.
    pub fn bound_energies(&self, x: f64) -> Result<Vec<(f64, Parity)>> {
        check_x(x)?;
        let (Some(blocks), Some(edge)) = (&self.blocks, continuum_edge(&self.spec)) else {
            let r = diagonalize(&self.spec, x, &self.options)?;
            return Ok(r
                .bound_states
                .iter()
                .map(|b| (b.energy, b.parity))
                .collect());
        };
        let sigma = self.options.threshold(edge);
        let mut out = Vec::new();
        for parity in [Parity::Even, Parity::Odd] {
            let t = blocks.block(x, parity);
            let n_bound = t.count_below(sigma);
            if n_bound == 0 {
                continue;
            }
            // Gershgorin lower bound
            let lower = (0..t.diag.len())
                .map(|i| {
                    let left = if i > 0 { t.off[i - 1].abs() } else { 0.0 };
                    let right = t.off.get(i).map_or(0.0, |v| v.abs());
                    t.diag[i] - left - right
                })
                .fold(f64::INFINITY, f64::min);
            for level in 0..n_bound {
                let (mut lo, mut hi) = (lower - 1.0, sigma);
                while hi - lo > 1e-13 * hi.abs().max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if t.count_below(mid) > level {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                out.push((0.5 * (lo + hi), parity));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(out)
    }

    /// Every level of a discrete spectrum is bound.
    fn count_discrete(&self, x: f64) -> Result<(usize, usize)> {
        if let Some(blocks) = &self.blocks {
            let even = blocks.block(x, Parity::Even).diag.len();
            let odd = blocks.block(x, Parity::Odd).diag.len();
            return Ok((even, odd));
        }
        let r = diagonalize(&self.spec, x, &self.options)?;
        Ok((r.n_b_even(), r.n_b_odd()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub x_c: f64,
    pub parity: Parity,
}

/// Depths at which a new bound state of either parity appears, located by
/// bisection between grid neighbours.
///
/// The grid must be ascending with spacing at most [`MAX_SCAN_STEP`]. A
/// count that decreases along the grid is reported as a diagnostics error;
/// it indicates a guard band too narrow for the level spacing.
pub fn scan_critical_x(
    spec: &ModelSpec,
    x_grid: &[f64],
    options: &SpectrumOptions,
) -> Result<Vec<CriticalPoint>> {
    if x_grid.len() < 2 {
        return Err(invalid("x_grid", "needs at least two points"));
    }
    for pair in x_grid.windows(2) {
        let step = pair[1] - pair[0];
        if !(step > 0.0) {
            return Err(invalid("x_grid", "must be strictly ascending"));
        }
        if step > MAX_SCAN_STEP + 1e-12 {
            return Err(invalid(
                "x_grid",
                format!("spacing {step:.4} exceeds {MAX_SCAN_STEP}"),
            ));
        }
    }
    let counter = BoundStateCounter::new(spec, *options)?;
    let counts: Vec<(usize, usize)> = x_grid
        .par_iter()
        .map(|&x| counter.count(x))
        .collect::<Result<_>>()?;
    let mut found = Vec::new();
    for k in 0..x_grid.len() - 1 {
        for parity in [Parity::Even, Parity::Odd] {
            let pick = |c: (usize, usize)| if parity == Parity::Even { c.0 } else { c.1 };
            let (before, after) = (pick(counts[k]), pick(counts[k + 1]));
            if after < before {
                return Err(Error::Diagnostics(format!(
                    "{parity:?} bound-state count drops from {before} to {after} between x = {} and x = {}",
                    x_grid[k],
                    x_grid[k + 1]
                )));
            }
            for level in before + 1..=after {
                let (mut lo, mut hi) = (x_grid[k], x_grid[k + 1]);
                while hi - lo > CRITICAL_X_RESOLUTION {
                    let mid = 0.5 * (lo + hi);
                    if pick(counter.count(mid)?) >= level {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                found.push(CriticalPoint {
                    x_c: 0.5 * (lo + hi),
                    parity,
                });
            }
        }
    }
    found.sort_by(|a, b| a.x_c.total_cmp(&b.x_c));
    Ok(found)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Thermal,
    ViolentRelaxationCandidate,
    PersistentOscillations,
}

impl Regime {
    pub fn from_count(n_b: usize) -> Self {
        match n_b {
            0 => Regime::Thermal,
            1 => Regime::ViolentRelaxationCandidate,
            _ => Regime::PersistentOscillations,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Thermal => "thermal",
            Regime::ViolentRelaxationCandidate => "violent_relaxation",
            Regime::PersistentOscillations => "persistent_oscillations",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeClassification {
    pub label: Regime,
    pub n_b_accessible: usize,
}

/// Regime predicted by the number of bound states reachable by the dynamics.
/// With `parity_restricted` only even states count. At `x = 0` there is no
/// well and the prediction is thermal for every model.
pub fn classify_regime(
    spec: &ModelSpec,
    x: f64,
    parity_restricted: bool,
    options: &SpectrumOptions,
) -> Result<RegimeClassification> {
    classify_with(
        &BoundStateCounter::new(spec, *options)?,
        x,
        parity_restricted,
    )
}

/// [`classify_regime`] reusing a prepared counter.
pub fn classify_with(
    counter: &BoundStateCounter,
    x: f64,
    parity_restricted: bool,
) -> Result<RegimeClassification> {
    check_x(x)?;
    let n_b_accessible = if x == 0.0 {
        0
    } else {
        let (even, odd) = counter.count(x)?;
        if parity_restricted {
            even
        } else {
            even + odd
        }
    };
    Ok(RegimeClassification {
        label: Regime::from_count(n_b_accessible),
        n_b_accessible,
    })
}

/// Discrete part of the von Neumann superoperator spectrum: all pairwise
/// differences of bound-state energies, ascending.
pub fn superoperator_frequencies(report: &SpectrumReport) -> Result<Vec<f64>> {
    if report.bound_states.is_empty() {
        return Err(invalid("report", "no bound states"));
    }
    let e = report.energies(None);
    let mut out: Vec<f64> = e
        .iter()
        .flat_map(|a| e.iter().map(move |b| a - b))
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Eigenvalues only, for callers that need the spectrum but not the states.
pub fn eigenvalues(spec: &ModelSpec, x: f64) -> Result<Vec<f64>> {
    check_x(x)?;
    let m = frozen_hamiltonian(spec, x)?;
    m.eigvalsh(UPLO::Upper)
        .map(|v| v.to_vec())
        .map_err(|e| Error::EigenSolver(e.to_string()))
}
