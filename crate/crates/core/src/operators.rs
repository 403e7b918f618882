// SPDX-License-Identifier: Apache-2.0

//! Dense single-site operator algebra and the two concrete models.
//!
//! Both models are written in a basis labelled by an integer quantum number
//! running symmetrically from `-n` to `n`: the magnetic number `m` of a
//! spin-`s` for the w-model and the angular momentum `L` of a planar rotor.
//! Basis index `i` carries the label `i - n`, so the `m -> -m` parity maps
//! index `i` to `dim - 1 - i`.

use log::warn;
use ndarray::{Array1, Array2};
use ndarray_linalg::{EigValsh, UPLO};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// Largest spin the dense w-model builder accepts.
pub const MAX_SPIN: u32 = 2000;

const HERMITICITY_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-10;
const IMAG_DISCARD_TOL: f64 = 1e-10;
const IMAG_ERROR_TOL: f64 = 1e-8;

fn hermiticity_defect(m: &Array2<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

/// A dense hermitian matrix acting on a single site (units with ħ = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: Array2<C64>,
}

impl HermitianOperator {
    pub fn new(matrix: Array2<C64>) -> Result<Self> {
        let (rows, cols) = matrix.dim();
        if rows != cols {
            return Err(Error::InvalidOperator(format!(
                "matrix is {rows}x{cols}, not square"
            )));
        }
        if rows < 2 {
            return Err(Error::InvalidOperator(format!(
                "dimension {rows} is below 2"
            )));
        }
        let defect = hermiticity_defect(&matrix);
        if !(defect <= HERMITICITY_TOL) {
            return Err(Error::InvalidOperator(format!(
                "hermiticity defect {defect:.3e} exceeds {HERMITICITY_TOL:.0e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn from_real(matrix: Array2<f64>) -> Result<Self> {
        Self::new(matrix.mapv(|v| C64::new(v, 0.0)))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut m = Array2::zeros((n, n));
        for (i, &v) in values.iter().enumerate() {
            m[[i, i]] = C64::new(v, 0.0);
        }
        Self::new(m)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    /// Largest imaginary part over all entries.
    pub fn max_imag(&self) -> f64 {
        self.matrix.iter().fold(0.0, |acc, z| acc.max(z.im.abs()))
    }

    pub fn real_part(&self) -> Array2<f64> {
        self.matrix.mapv(|z| z.re)
    }

    /// Max-norm of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .fold(0.0, |acc, (a, b)| acc.max((a - b).norm()))
    }

    /// Max-norm of `A - P A P` for the basis permutation `perm`.
    pub fn permutation_defect(&self, perm: &[usize]) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.matrix[[i, j]] - self.matrix[[perm[i], perm[j]]]).norm());
            }
        }
        worst
    }

    /// Row-sum norm, an upper bound on the spectral radius.
    pub fn row_sum_norm(&self) -> f64 {
        self.matrix
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `self + coeff * other`, still hermitian for real `coeff`.
    pub fn add_scaled(&self, coeff: f64, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(Self {
            matrix: &self.matrix + &other.matrix.mapv(|z| z * coeff),
        })
    }
}

/// A single-site density matrix: hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: Array2<C64>,
}

impl DensityMatrix {
    pub fn new(matrix: Array2<C64>) -> Result<Self> {
        let (rows, cols) = matrix.dim();
        if rows != cols || rows < 2 {
            return Err(Error::InvalidState(format!(
                "density matrix must be square with dim >= 2, got {rows}x{cols}"
            )));
        }
        let defect = hermiticity_defect(&matrix);
        if !(defect <= HERMITICITY_TOL) {
            return Err(Error::InvalidState(format!(
                "hermiticity defect {defect:.3e}"
            )));
        }
        let trace: C64 = matrix.diag().sum();
        if !((trace.re - 1.0).abs() <= TRACE_TOL) {
            return Err(Error::InvalidState(format!("trace {} is not 1", trace.re)));
        }
        let eigenvalues = matrix
            .eigvalsh(UPLO::Upper)
            .map_err(|e| Error::EigenSolver(e.to_string()))?;
        let min = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        let rho = Self { matrix };
        let purity = rho.purity();
        let lower = 1.0 / rows as f64 - TRACE_TOL;
        if purity < lower || purity > 1.0 + TRACE_TOL {
            return Err(Error::InvalidState(format!(
                "purity {purity} outside [1/dim, 1]"
            )));
        }
        Ok(rho)
    }

    /// `|psi><psi|` after normalizing `psi`.
    pub fn pure(psi: &Array1<C64>) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState("state vector has zero norm".into()));
        }
        let psi = psi.mapv(|z| z / norm);
        let n = psi.len();
        let matrix = Array2::from_shape_fn((n, n), |(i, j)| psi[i] * psi[j].conj());
        Self::new(matrix)
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        let mut m = Array2::zeros((dim, dim));
        for i in 0..dim {
            m[[i, i]] = C64::new(1.0 / dim as f64, 0.0);
        }
        Self::new(m)
    }

    pub fn basis_state(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidState(format!(
                "basis index {index} out of range for dim {dim}"
            )));
        }
        let mut psi = Array1::zeros(dim);
        psi[index] = C64::new(1.0, 0.0);
        Self::pure(&psi)
    }

    /// Skips validation; callers guarantee the invariants up to round-off.
    pub(crate) fn from_raw(matrix: Array2<C64>) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diag().iter().map(|z| z.re).sum()
    }

    pub fn purity(&self) -> f64 {
        // tr(rho^2) = sum_ij |rho_ij|^2 for hermitian rho
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// The state vector of a pure state, with the phase fixed so that its
    /// largest component is real and positive. `None` for mixed states.
    pub fn pure_vector(&self) -> Option<Array1<C64>> {
        if (self.purity() - 1.0).abs() > 1e-10 {
            return None;
        }
        let (k, pkk) = self
            .matrix
            .diag()
            .iter()
            .enumerate()
            .map(|(i, z)| (i, z.re))
            .fold(
                (0, f64::MIN),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
        let scale = 1.0 / pkk.sqrt();
        Some(self.matrix.column(k).mapv(|z| z * scale))
    }

    /// Max-norm of the parity-odd block `(rho - P rho P) / 2`.
    pub fn parity_odd_norm(&self, perm: &[usize]) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                worst =
                    worst.max(0.5 * (self.matrix[[i, j]] - self.matrix[[perm[i], perm[j]]]).norm());
            }
        }
        worst
    }

    /// `tr(rho P)` for the basis permutation `perm`.
    pub fn permutation_expectation(&self, perm: &[usize]) -> f64 {
        (0..self.dim()).map(|i| self.matrix[[perm[i], i]].re).sum()
    }
}

/// Which concrete model a [`ModelSpec`] encodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelTag {
    WModel {
        s: u32,
        w: u32,
        h: f64,
    },
    /// `hbar` rescales the kinetic term; 1 is the physical rotor.
    Rotor {
        l_max: u32,
        hbar: f64,
    },
}

/// Single-site reduction of a fully-connected Hamiltonian: the local term
/// `h0`, the coupling operators `h1[a]`, and the ferromagnetic coupling.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    h0: HermitianOperator,
    h1: Vec<HermitianOperator>,
    lambda: f64,
    basis_labels: Vec<i64>,
    parity_map: Vec<usize>,
    tag: ModelTag,
}

impl ModelSpec {
    pub fn new(
        h0: HermitianOperator,
        h1: Vec<HermitianOperator>,
        lambda: f64,
        basis_labels: Vec<i64>,
        parity_map: Vec<usize>,
        tag: ModelTag,
    ) -> Result<Self> {
        let dim = h0.dim();
        if h1.is_empty() {
            return Err(Error::InvalidModel("no coupling operator".into()));
        }
        for op in &h1 {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: op.dim(),
                });
            }
        }
        if basis_labels.len() != dim || parity_map.len() != dim {
            return Err(Error::InvalidModel(format!(
                "basis labels ({}) and parity map ({}) must have length {dim}",
                basis_labels.len(),
                parity_map.len()
            )));
        }
        if parity_map
            .iter()
            .enumerate()
            .any(|(i, &p)| p >= dim || parity_map[p] != i)
        {
            return Err(Error::InvalidModel(
                "parity map is not an involution".into(),
            ));
        }
        check_lambda(lambda)?;
        Ok(Self {
            h0,
            h1,
            lambda,
            basis_labels,
            parity_map,
            tag,
        })
    }

    /// Same model at a different coupling.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            lambda,
            ..self.clone()
        })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn h0(&self) -> &HermitianOperator {
        &self.h0
    }

    pub fn h1(&self) -> &[HermitianOperator] {
        &self.h1
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn basis_labels(&self) -> &[i64] {
        &self.basis_labels
    }

    pub fn parity_map(&self) -> &[usize] {
        &self.parity_map
    }

    pub fn tag(&self) -> ModelTag {
        self.tag
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidModel(format!(
            "coupling lambda = {lambda} must be positive and finite"
        )));
    }
    Ok(())
}

fn symmetric_labels(n: u32) -> (Vec<i64>, Vec<usize>) {
    let n = n as i64;
    let labels: Vec<i64> = (-n..=n).collect();
    let dim = labels.len();
    let parity = (0..dim).map(|i| dim - 1 - i).collect();
    (labels, parity)
}

/// Spin-`s` w-model: hopping `-(h/s) s_x` plus the square-well projector on
/// `|m| <= w`. The returned spec has `lambda = 1`; see
/// [`ModelSpec::with_lambda`].
pub fn build_w_model(s: u32, w: u32, h: f64) -> Result<ModelSpec> {
    if s == 0 {
        return Err(Error::InvalidModel("spin s must be positive".into()));
    }
    if s > MAX_SPIN {
        return Err(Error::InvalidModel(format!(
            "spin s = {s} exceeds the dense budget {MAX_SPIN}"
        )));
    }
    if w >= s {
        return Err(Error::InvalidModel(format!(
            "well width w = {w} must be < s = {s}"
        )));
    }
    if !h.is_finite() {
        return Err(Error::InvalidModel("field h must be finite".into()));
    }
    let (labels, parity) = symmetric_labels(s);
    let dim = labels.len();
    let sf = s as f64;
    let mut h0 = Array2::<f64>::zeros((dim, dim));
    for i in 0..dim - 1 {
        // <m'|H0|m> with m = m' + 1
        let mp = labels[i] as f64;
        let m = labels[i + 1] as f64;
        let element = -(h / (2.0 * sf)) * (sf * (sf + 1.0) - mp * m).sqrt();
        h0[[i, i + 1]] = element;
        h0[[i + 1, i]] = element;
    }
    let well: Vec<f64> = labels
        .iter()
        .map(|&m| {
            if m * m <= (w as i64) * (w as i64) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    ModelSpec::new(
        HermitianOperator::from_real(h0)?,
        vec![HermitianOperator::diagonal(&well)?],
        1.0,
        labels,
        parity,
        ModelTag::WModel { s, w, h },
    )
}

/// Planar quantum rotor truncated to `|L| <= l_max`, with `H0 = L^2/2` and the
/// single coupling `cos(theta)`. The returned spec has `lambda = 1`.
pub fn build_rotor_model(l_max: u32) -> Result<ModelSpec> {
    build_rotor_model_scaled(l_max, 1.0)
}

/// Rotor with an effective Planck constant: the single-site generator is
/// `hbar L^2/2 - (lambda/hbar) mu cos(theta)` in integer angular-momentum
/// units, so `hbar -> 0` at fixed `lambda` approaches the classical pendulum.
/// The returned spec has `lambda = 1/hbar`.
pub fn build_rotor_model_scaled(l_max: u32, hbar: f64) -> Result<ModelSpec> {
    if l_max < 1 {
        return Err(Error::InvalidModel(
            "rotor truncation l_max must be >= 1".into(),
        ));
    }
    if !(hbar > 0.0) || !hbar.is_finite() {
        return Err(Error::InvalidModel(format!(
            "hbar = {hbar} must be positive"
        )));
    }
    let (labels, parity) = symmetric_labels(l_max);
    let dim = labels.len();
    let kinetic: Vec<f64> = labels
        .iter()
        .map(|&l| 0.5 * hbar * (l * l) as f64)
        .collect();
    let mut cos = Array2::<f64>::zeros((dim, dim));
    for i in 0..dim - 1 {
        cos[[i, i + 1]] = 0.5;
        cos[[i + 1, i]] = 0.5;
    }
    ModelSpec::new(
        HermitianOperator::diagonal(&kinetic)?,
        vec![HermitianOperator::from_real(cos)?],
        1.0 / hbar,
        labels,
        parity,
        ModelTag::Rotor { l_max, hbar },
    )
}

/// Pure Gaussian state of the w-model: `<m|psi> ∝ exp(-m^2 / (4 width^2))`,
/// so `|<m|psi>|^2` has standard deviation `width`. `width = 1` reproduces
/// the amplitude `exp(-m^2/4)`.
pub fn gaussian_w_state(s: u32, width: f64) -> Result<DensityMatrix> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(invalid("width", format!("{width} must be positive")));
    }
    if s == 0 {
        return Err(Error::InvalidModel("spin s must be positive".into()));
    }
    let n = s as i64;
    let psi: Array1<C64> = (-n..=n)
        .map(|m| C64::new((-((m * m) as f64) / (4.0 * width * width)).exp(), 0.0))
        .collect();
    DensityMatrix::pure(&psi)
}

/// `(3|L=0> + |L=-1> + |L=1>) / sqrt(11)`.
pub fn rotor_initial_state(l_max: u32) -> Result<DensityMatrix> {
    if l_max < 1 {
        return Err(Error::InvalidModel(
            "rotor truncation l_max must be >= 1".into(),
        ));
    }
    let dim = 2 * l_max as usize + 1;
    let centre = l_max as usize;
    let mut psi = Array1::zeros(dim);
    psi[centre] = C64::new(3.0, 0.0);
    psi[centre - 1] = C64::new(1.0, 0.0);
    psi[centre + 1] = C64::new(1.0, 0.0);
    DensityMatrix::pure(&psi)
}

/// Rotor state whose angular density is a Gaussian of width `theta_width`
/// centred at `theta = 0`: `<L|psi> ∝ exp(-L^2 theta_width^2)`.
pub fn rotor_gaussian_state(l_max: u32, theta_width: f64) -> Result<DensityMatrix> {
    if l_max < 1 {
        return Err(Error::InvalidModel(
            "rotor truncation l_max must be >= 1".into(),
        ));
    }
    if !(theta_width > 0.0) || !theta_width.is_finite() {
        return Err(invalid(
            "theta_width",
            format!("{theta_width} must be positive"),
        ));
    }
    let n = l_max as i64;
    let psi: Array1<C64> = (-n..=n)
        .map(|l| C64::new((-((l * l) as f64) * theta_width * theta_width).exp(), 0.0))
        .collect();
    DensityMatrix::pure(&psi)
}

/// `tr(rho A)`.
pub fn expectation(rho: &DensityMatrix, a: &HermitianOperator) -> Result<f64> {
    if rho.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: a.dim(),
        });
    }
    let r = rho.matrix();
    let m = a.matrix();
    let n = rho.dim();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += r[[i, j]] * m[[j, i]];
        }
    }
    if acc.im.abs() > IMAG_ERROR_TOL {
        return Err(Error::NumericalIntegrity(format!(
            "tr(rho A) has imaginary residue {:.3e}",
            acc.im
        )));
    }
    if acc.im.abs() > IMAG_DISCARD_TOL {
        warn!(
            "discarding imaginary residue {:.3e} of an expectation value",
            acc.im
        );
    }
    Ok(acc.re)
}
