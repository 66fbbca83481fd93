//! Regularized design matrices with an incrementally maintained inverse.
//!
//! [`GramState`] holds `Λ = λI + Σ φφᵀ` together with a cached `Λ⁻¹`. Each
//! absorbed feature vector costs `O(d²)` through the Sherman-Morrison identity
//!
//! ```text
//! Λ⁻¹ ← Λ⁻¹ − (Λ⁻¹φ)(Λ⁻¹φ)ᵀ / (1 + φᵀΛ⁻¹φ)
//! ```
//!
//! The cached inverse is re-symmetrized after every update and recomputed
//! from `Λ` by a Cholesky factorization every [`REFRESH_INTERVAL`] updates,
//! which keeps `Λ·Λ⁻¹` within 1e-8 of the identity over long runs.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Number of rank-one updates between full recomputations of the inverse.
pub const REFRESH_INTERVAL: usize = 4096;

/// Negative quadratic forms down to this value are treated as round-off.
const QUAD_FORM_FLOOR: f64 = -1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GramState {
    dim: usize,
    lambda: f64,
    gram: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    count: usize,
    since_refresh: usize,
}

impl GramState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "regularizer must be positive and finite, got {lambda}"
            )));
        }
        Ok(Self {
            dim,
            lambda,
            gram: DMatrix::identity(dim, dim) * lambda,
            gram_inv: DMatrix::identity(dim, dim) / lambda,
            count: 0,
            since_refresh: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of feature vectors absorbed since construction.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_inv(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                got: len,
            })
        }
    }

    /// Absorbs `φφᵀ` into the Gram matrix and updates the cached inverse.
    pub fn rank_one_update(&mut self, phi: &[f64]) -> Result<()> {
        self.check_dim(phi.len())?;
        let phi = DVector::from_column_slice(phi);

        self.gram.ger(1.0, &phi, &phi, 1.0);

        let inv_phi = &self.gram_inv * &phi;
        let denom = 1.0 + phi.dot(&inv_phi);
        self.gram_inv.ger(-1.0 / denom, &inv_phi, &inv_phi, 1.0);
        symmetrize(&mut self.gram_inv);

        self.count += 1;
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_INTERVAL {
            self.refresh_inverse();
        }
        Ok(())
    }

    /// Recomputes `Λ⁻¹` from `Λ` directly.
    pub fn refresh_inverse(&mut self) {
        let inv = self
            .gram
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            // Λ ⪰ λI always, so the factorization only fails on non-finite input.
            .expect("Gram matrix lost positive definiteness");
        self.gram_inv = inv;
        symmetrize(&mut self.gram_inv);
        self.since_refresh = 0;
    }

    /// `φᵀΛ⁻¹φ`, clamped at zero.
    pub fn quad_form(&self, phi: &[f64]) -> Result<f64> {
        self.check_dim(phi.len())?;
        let d = self.dim;
        let inv = self.gram_inv.as_slice();
        let mut acc = 0.0;
        // column-major storage; the matrix is symmetric so the layout is immaterial
        for (j, &pj) in phi.iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            let col = &inv[j * d..(j + 1) * d];
            let dot: f64 = col.iter().zip(phi).map(|(m, p)| m * p).sum();
            acc += pj * dot;
        }
        debug_assert!(acc >= QUAD_FORM_FLOOR * (1.0 + acc.abs()), "quad form {acc}");
        Ok(acc.max(0.0))
    }

    /// `Λ⁻¹v` using the cached inverse.
    pub fn apply_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v.len())?;
        let v = DVector::from_column_slice(v);
        Ok((&self.gram_inv * v).iter().copied().collect())
    }

    /// Max-abs entry of `Λ·Λ⁻¹ − I`.
    pub fn identity_residual(&self) -> f64 {
        let prod = &self.gram * &self.gram_inv;
        let id = DMatrix::<f64>::identity(self.dim, self.dim);
        (prod - id).amax()
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Right-hand side of the elliptical potential bound,
/// `2d·log((λ + K)/λ)`.
pub fn elliptical_potential_bound(dim: usize, lambda: f64, updates: usize) -> f64 {
    2.0 * dim as f64 * ((lambda + updates as f64) / lambda).ln()
}
