//! Soft-max action distributions.
//!
//! `soft_max(x, α)_i = exp(α x_i) / Σ_n exp(α x_n)`, evaluated after
//! subtracting `max(x)`. `α = 0` gives the uniform distribution and
//! `α = +∞` the greedy point mass (ties go to the lowest index).

use rand::Rng;

use crate::{Error, Result};

/// Tolerance on the total mass of a distribution.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    probs: Vec<f64>,
}

impl ActionDistribution {
    /// Validates and wraps a probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("bad entry {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL * probs.len().max(1) as f64 {
            return Err(Error::InvalidDistribution(format!("mass {total} != 1")));
        }
        Ok(Self { probs })
    }

    pub fn point_mass(support_size: usize, index: usize) -> Self {
        assert!(index < support_size, "point mass index out of range");
        let mut probs = vec![0.0; support_size];
        probs[index] = 1.0;
        Self { probs }
    }

    pub fn uniform(support_size: usize) -> Self {
        assert!(support_size > 0, "uniform over empty support");
        Self {
            probs: vec![1.0 / support_size as f64; support_size],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    /// Index of the mass if this is a point mass.
    pub fn as_point_mass(&self) -> Option<usize> {
        let mut nonzero = self.probs.iter().enumerate().filter(|(_, p)| **p > 0.0);
        match (nonzero.next(), nonzero.next()) {
            (Some((i, _)), None) => Some(i),
            _ => None,
        }
    }

    /// Inverse-CDF draw using one uniform from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        inverse_cdf(&self.probs, rng.random())
    }

    /// `Σ_i probs_i · values_i`.
    pub fn expected_value(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.probs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.probs.len(),
                got: values.len(),
            });
        }
        Ok(self.probs.iter().zip(values).map(|(p, v)| p * v).sum())
    }
}

/// First index whose cumulative mass exceeds `u ∈ [0, 1)`, skipping
/// zero-probability entries.
pub(crate) fn inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    // u landed in the round-off gap above the accumulated mass
    last_positive
}

/// Lowest index attaining the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn soft_max(values: &[f64], alpha: f64) -> Result<ActionDistribution> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("soft-max of an empty vector".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("soft-max input contains NaN".into()));
    }
    if values.iter().any(|v| v.is_infinite()) {
        return Err(Error::InvalidArgument("soft-max input must be finite".into()));
    }
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "soft-max temperature must be in [0, inf], got {alpha}"
        )));
    }
    let n = values.len();
    if alpha == f64::INFINITY {
        return Ok(ActionDistribution::point_mass(n, argmax(values)));
    }
    if alpha == 0.0 {
        return Ok(ActionDistribution::uniform(n));
    }
    let max = values[argmax(values)];
    let mut probs: Vec<f64> = values.iter().map(|v| (alpha * (v - max)).exp()).collect();
    // the argmax term is exp(0) = 1, so the sum is in [1, n]
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(ActionDistribution { probs })
}
