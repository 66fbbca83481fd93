use crate::{Error, Result};

/// Learner hyper-parameters.
///
/// `alpha_l`/`alpha_f` are soft-max inverse temperatures; `f64::INFINITY`
/// selects the greedy policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    /// UCB bonus coefficient.
    pub beta: f64,
    /// Constant in `β = c1·d·H·√ι`.
    pub c1: f64,
    pub alpha_l: f64,
    pub alpha_f: f64,
    /// Ridge regularizer.
    pub lambda: f64,
    pub failure_prob: f64,
    pub horizon: usize,
    pub episodes: usize,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {}", self.beta)));
        }
        for (name, alpha) in [("alpha_l", self.alpha_l), ("alpha_f", self.alpha_f)] {
            if !(alpha > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be in (0, inf], got {alpha}"
                )));
            }
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.failure_prob > 0.0 && self.failure_prob < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "failure probability must be in (0, 1), got {}",
                self.failure_prob
            )));
        }
        if self.horizon == 0 || self.episodes == 0 {
            return Err(Error::InvalidArgument("horizon and episodes must be at least 1".into()));
        }
        Ok(())
    }

    /// Total number of steps `T = K·H`.
    pub fn total_steps(&self) -> usize {
        self.episodes * self.horizon
    }
}

/// `log(n)`, replaced by 1 for a singleton action set.
pub fn temperature_log_factor(num_actions: usize) -> f64 {
    if num_actions <= 1 {
        1.0
    } else {
        (num_actions as f64).ln()
    }
}

/// Confidence log term
/// `ι = log((log(|A||B|) + 2·log|A|·log|B|)·4dT/p)`.
///
/// The combinatorial factor is floored at 1 so that a game with
/// `|A| = |B| = 1` keeps a finite `ι = log(4dT/p)`.
pub fn confidence_log_term(
    dim: usize,
    num_leader_actions: usize,
    num_follower_actions: usize,
    total_steps: usize,
    failure_prob: f64,
) -> f64 {
    let la = (num_leader_actions as f64).ln();
    let lb = (num_follower_actions as f64).ln();
    let factor = (la + lb + 2.0 * la * lb).max(1.0);
    (factor * 4.0 * dim as f64 * total_steps as f64 / failure_prob).ln()
}

/// Default parameter settings: `β = c1·d·H·√ι`,
/// `α_f = log|B|·√K/H`, `α_l = log|A|·√K/H`, `λ = 1`.
pub fn default_hyperparams(
    dim: usize,
    num_leader_actions: usize,
    num_follower_actions: usize,
    horizon: usize,
    episodes: usize,
    failure_prob: f64,
    c1: f64,
) -> Result<HyperParams> {
    if episodes == 0 || horizon == 0 || dim == 0 {
        return Err(Error::InvalidArgument(
            "episodes, horizon and dimension must be at least 1".into(),
        ));
    }
    if !(failure_prob > 0.0 && failure_prob < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "failure probability must be in (0, 1), got {failure_prob}"
        )));
    }
    if !(c1 > 0.0) || !c1.is_finite() {
        return Err(Error::InvalidArgument(format!("c1 must be positive, got {c1}")));
    }
    let total_steps = episodes * horizon;
    let iota = confidence_log_term(
        dim,
        num_leader_actions,
        num_follower_actions,
        total_steps,
        failure_prob,
    );
    let sqrt_k_over_h = (episodes as f64).sqrt() / horizon as f64;
    let params = HyperParams {
        beta: c1 * dim as f64 * horizon as f64 * iota.sqrt(),
        c1,
        alpha_l: temperature_log_factor(num_leader_actions) * sqrt_k_over_h,
        alpha_f: temperature_log_factor(num_follower_actions) * sqrt_k_over_h,
        lambda: 1.0,
        failure_prob,
        horizon,
        episodes,
    };
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_setting_for_small_game() {
        let p = default_hyperparams(4, 2, 2, 2, 100, 0.1, 1.0).unwrap();
        let l2 = 2f64.ln();
        let iota = ((4f64.ln() + 2.0 * l2 * l2) * 3200.0 / 0.1).ln();
        assert!((p.beta - 8.0 * iota.sqrt()).abs() < 1e-12);
        assert!((p.alpha_f - l2 * 10.0 / 2.0).abs() < 1e-12);
        assert!((p.alpha_l - l2 * 10.0 / 2.0).abs() < 1e-12);
        assert_eq!(p.lambda, 1.0);
        assert_eq!(p.total_steps(), 200);
    }

    #[test]
    fn singleton_follower_uses_unit_log_factor() {
        let p = default_hyperparams(3, 2, 1, 2, 16, 0.1, 1.0).unwrap();
        assert!((p.alpha_f - 4.0 / 2.0).abs() < 1e-15);
        assert!((p.alpha_l - 2f64.ln() * 2.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_game_keeps_finite_iota() {
        let iota = confidence_log_term(2, 1, 1, 10, 0.5);
        assert!((iota - (4.0 * 2.0 * 10.0 / 0.5f64).ln()).abs() < 1e-12);
        assert!(default_hyperparams(2, 1, 1, 1, 10, 0.5, 1.0).is_ok());
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(default_hyperparams(2, 2, 2, 2, 0, 0.1, 1.0).is_err());
        assert!(default_hyperparams(2, 2, 2, 2, 10, 0.0, 1.0).is_err());
        assert!(default_hyperparams(2, 2, 2, 2, 10, 1.0, 1.0).is_err());
        assert!(default_hyperparams(2, 2, 2, 2, 10, 0.1, 0.0).is_err());
        let mut p = default_hyperparams(2, 2, 2, 2, 10, 0.1, 1.0).unwrap();
        p.alpha_l = 0.0;
        assert!(p.validate().is_err());
        p.alpha_l = f64::INFINITY;
        assert!(p.validate().is_ok());
    }
}
