//! Dense symmetric matrices at small, fixed dimension.
//!
//! Everything in this crate works with d-by-d Gram/design matrices where d is
//! the feature dimension (single digits in practice), so the representation is
//! a plain row-major `Vec<f64>` and the factorizations are written out
//! directly: Cholesky for log-determinants, solves and inverses, and a cyclic
//! Jacobi sweep for eigenvalue bounds in tests and diagnostics. No BLAS, no
//! allocation in the hot accessors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Euclidean inner product. Callers guarantee equal lengths.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Euclidean norm.
#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A symmetric d-by-d matrix stored densely (full square, both triangles kept
/// in sync by the mutating methods).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    d: usize,
    a: Vec<f64>,
}

impl SymMat {
    pub fn zeros(d: usize) -> Self {
        SymMat { d, a: vec![0.0; d * d] }
    }

    /// c·I.
    pub fn scaled_identity(d: usize, c: f64) -> Self {
        let mut m = SymMat::zeros(d);
        for i in 0..d {
            m.a[i * d + i] = c;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.d + j]
    }

    /// Sets entry (i, j) and its mirror (j, i).
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.d + j] = v;
        self.a[j * self.d + i] = v;
    }

    pub fn fill_zero(&mut self) {
        self.a.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn copy_from(&mut self, other: &SymMat) {
        debug_assert_eq!(self.d, other.d);
        self.a.copy_from_slice(&other.a);
    }

    /// self += c·I.
    pub fn add_scaled_identity(&mut self, c: f64) {
        for i in 0..self.d {
            self.a[i * self.d + i] += c;
        }
    }

    /// self += w·v vᵀ.
    pub fn add_outer(&mut self, v: &[f64], w: f64) {
        debug_assert_eq!(v.len(), self.d);
        for i in 0..self.d {
            let wi = w * v[i];
            for j in 0..self.d {
                self.a[i * self.d + j] += wi * v[j];
            }
        }
    }

    /// self += other.
    pub fn add_in(&mut self, other: &SymMat) {
        debug_assert_eq!(self.d, other.d);
        for (s, o) in self.a.iter_mut().zip(&other.a) {
            *s += o;
        }
    }

    /// self -= other.
    pub fn sub_in(&mut self, other: &SymMat) {
        debug_assert_eq!(self.d, other.d);
        for (s, o) in self.a.iter_mut().zip(&other.a) {
            *s -= o;
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.a.iter_mut().for_each(|v| *v *= c);
    }

    /// vᵀ·self·v.
    #[inline]
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.bilinear(v, v)
    }

    /// uᵀ·self·v.
    #[inline]
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.d);
        debug_assert_eq!(v.len(), self.d);
        let mut acc = 0.0;
        for i in 0..self.d {
            let row = &self.a[i * self.d..(i + 1) * self.d];
            acc += u[i] * dot(row, v);
        }
        acc
    }

    /// out = self·v.
    pub fn mat_vec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.d);
        debug_assert_eq!(out.len(), self.d);
        for i in 0..self.d {
            out[i] = dot(&self.a[i * self.d..(i + 1) * self.d], v);
        }
    }

    /// Maximum absolute entry; handy for coarse error bounds in tests.
    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Lower-triangular Cholesky factor, or `None` when the matrix is not
    /// (numerically) positive definite or contains non-finite entries. This
    /// doubles as the positive-definiteness test everywhere in the crate.
    pub fn cholesky(&self) -> Option<Cholesky> {
        let d = self.d;
        let mut l = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let mut s = self.a[i * d + j];
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None; // catches s <= 0 and NaN
                    }
                    l[i * d + i] = s.sqrt();
                } else {
                    l[i * d + j] = s / l[j * d + j];
                }
            }
        }
        if l.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Cholesky { d, l })
    }

    /// ln det of a positive definite matrix, via Cholesky.
    pub fn logdet(&self) -> Option<f64> {
        self.cholesky().map(|c| c.logdet())
    }

    /// Eigenvalues by cyclic Jacobi rotations, ascending. Accuracy is ample
    /// for operator-norm bounds at the dimensions used here.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let d = self.d;
        let mut a = self.a.clone();
        for _sweep in 0..64 {
            let mut off = 0.0;
            for i in 0..d {
                for j in (i + 1)..d {
                    off += a[i * d + j] * a[i * d + j];
                }
            }
            if off.sqrt() < 1e-14 * (1.0 + self.max_abs()) {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    let apq = a[p * d + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[p * d + p];
                    let aqq = a[q * d + q];
                    let theta = 0.5 * (aqq - app) / apq;
                    let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..d {
                        let akp = a[k * d + p];
                        let akq = a[k * d + q];
                        a[k * d + p] = c * akp - s * akq;
                        a[k * d + q] = s * akp + c * akq;
                    }
                    for k in 0..d {
                        let apk = a[p * d + k];
                        let aqk = a[q * d + k];
                        a[p * d + k] = c * apk - s * aqk;
                        a[q * d + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..d).map(|i| a[i * d + i]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ev
    }

    /// Spectral norm (largest absolute eigenvalue).
    pub fn op_norm(&self) -> f64 {
        self.eigenvalues()
            .into_iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Validates a caller-supplied vector length against this matrix.
    pub fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: v.len() });
        }
        Ok(())
    }
}

/// Lower-triangular Cholesky factor of a positive definite [`SymMat`].
#[derive(Debug, Clone)]
pub struct Cholesky {
    d: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// ln det A = 2·Σ ln L_ii.
    pub fn logdet(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d {
            s += self.l[i * self.d + i].ln();
        }
        2.0 * s
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.d);
        let d = self.d;
        let mut y = b.to_vec();
        // forward: L y = b
        for i in 0..d {
            for k in 0..i {
                y[i] -= self.l[i * d + k] * y[k];
            }
            y[i] /= self.l[i * d + i];
        }
        // backward: Lᵀ x = y
        for i in (0..d).rev() {
            for k in (i + 1)..d {
                y[i] -= self.l[k * d + i] * y[k];
            }
            y[i] /= self.l[i * d + i];
        }
        y
    }

    /// Dense inverse, column by column.
    pub fn inverse(&self) -> SymMat {
        let d = self.d;
        let mut inv = SymMat::zeros(d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = self.solve(&e);
            e[j] = 0.0;
            for i in 0..d {
                inv.a[i * d + j] = col[i];
            }
        }
        // symmetrize against round-off so quadratic forms stay exactly symmetric
        for i in 0..d {
            for j in (i + 1)..d {
                let v = 0.5 * (inv.a[i * d + j] + inv.a[j * d + i]);
                inv.a[i * d + j] = v;
                inv.a[j * d + i] = v;
            }
        }
        inv
    }
}
