// SPDX-License-Identifier: Apache-2.0

//! Compressed-row kernel for applying `H0 - lambda * sum_a mu_a H1_a`.
//!
//! The dense operators are scanned once for their joint non-zero pattern;
//! each RK stage then reassembles the effective generator on that pattern
//! and applies it in `O(nnz * dim)` instead of `O(dim^3)`.

use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use crate::operators::{ModelSpec, C64};

pub(crate) struct GeneratorKernel {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    h0: Vec<C64>,
    h1: Vec<Vec<C64>>,
    lambda: f64,
    /// Assembled values of the current effective generator.
    values: Vec<C64>,
}

impl GeneratorKernel {
    pub(crate) fn new(spec: &ModelSpec) -> Self {
        let dim = spec.dim();
        let h0 = spec.h0().matrix();
        let h1: Vec<&Array2<C64>> = spec.h1().iter().map(|op| op.matrix()).collect();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut v0 = Vec::new();
        let mut v1 = vec![Vec::new(); h1.len()];
        row_ptr.push(0);
        for i in 0..dim {
            for j in 0..dim {
                let nonzero = h0[[i, j]] != C64::new(0.0, 0.0)
                    || h1.iter().any(|m| m[[i, j]] != C64::new(0.0, 0.0));
                if nonzero {
                    cols.push(j);
                    v0.push(h0[[i, j]]);
                    for (a, m) in h1.iter().enumerate() {
                        v1[a].push(m[[i, j]]);
                    }
                }
            }
            row_ptr.push(cols.len());
        }
        let values = v0.clone();
        Self {
            dim,
            row_ptr,
            cols,
            h0: v0,
            h1: v1,
            lambda: spec.lambda(),
            values,
        }
    }

    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn n_couplings(&self) -> usize {
        self.h1.len()
    }

    /// Load `H0 - lambda * sum_a mu[a] H1_a` as the current generator.
    pub(crate) fn assemble(&mut self, mu: &[f64]) {
        self.values.copy_from_slice(&self.h0);
        for (a, term) in self.h1.iter().enumerate() {
            let c = -self.lambda * mu[a];
            for (v, t) in self.values.iter_mut().zip(term) {
                *v += t * c;
            }
        }
    }

    fn bilinear(&self, vals: &[C64], psi: &[C64]) -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.dim {
            let mut row = C64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += vals[k] * psi[self.cols[k]];
            }
            acc += psi[i].conj() * row;
        }
        acc.re
    }

    fn trace_product(&self, vals: &[C64], rho: ArrayView2<C64>) -> f64 {
        // tr(A rho) = sum_i sum_k A_ik rho_ki
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += vals[k] * rho[[self.cols[k], i]];
            }
        }
        acc.re
    }

    pub(crate) fn mu_pure(&self, psi: &[C64], out: &mut [f64]) {
        for (a, term) in self.h1.iter().enumerate() {
            out[a] = self.bilinear(term, psi);
        }
    }

    pub(crate) fn h0_pure(&self, psi: &[C64]) -> f64 {
        self.bilinear(&self.h0, psi)
    }

    pub(crate) fn mu_mixed(&self, rho: ArrayView2<C64>, out: &mut [f64]) {
        for (a, term) in self.h1.iter().enumerate() {
            out[a] = self.trace_product(term, rho);
        }
    }

    pub(crate) fn h0_mixed(&self, rho: ArrayView2<C64>) -> f64 {
        self.trace_product(&self.h0, rho)
    }

    /// `out = -i H psi` with the assembled generator.
    pub(crate) fn schrodinger_rhs(&self, psi: &[C64], out: &mut [C64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let mut row = C64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.values[k] * psi[self.cols[k]];
            }
            *o = C64::new(row.im, -row.re);
        }
    }

    /// `out = -i [H, rho]` for hermitian `rho`, using `rho H = (H rho)^†`.
    pub(crate) fn von_neumann_rhs(
        &self,
        rho: ArrayView2<C64>,
        scratch: &mut Array2<C64>,
        mut out: ArrayViewMut2<C64>,
    ) {
        let n = self.dim;
        scratch.fill(C64::new(0.0, 0.0));
        for i in 0..n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.values[k];
                let src = rho.row(self.cols[k]);
                let mut dst = scratch.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src.iter()) {
                    *d += a * s;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let c = scratch[[i, j]] - scratch[[j, i]].conj();
                out[[i, j]] = C64::new(c.im, -c.re);
            }
        }
    }
}
