//! Optimistic least-squares value iteration with soft-max policies for both
//! players.
//!
//! At the start of episode `k`, [`Learner::plan`] sweeps `h = H..1` and fits
//! for each player `m`
//!
//! ```text
//! w_{m,h} = Λ_h⁻¹ Σ_τ φ_h^τ (r_{m,h}^τ + V_{m,h+1}(x_{h+1}^τ))
//! Q_{m,h}(x,a,b) = min(⟨w_{m,h}, φ(x,a,b)⟩ + β‖φ(x,a,b)‖_{Λ_h⁻¹}, H)
//! ```
//!
//! where `V_{m,h+1}` is recomputed at every stored successor state with the
//! freshly fitted step-`h+1` weights. The follower plays
//! `soft_max(Q_f(x,a,·), α_f)` after observing the leader's action; the
//! leader plays `soft_max(q_l(x,·), α_l)` on its marginal
//! `q_l(x,a) = Σ_b π_f(b|x,a) Q_l(x,a,b)`.
//!
//! Both players run the same updates on shared observations, so a single
//! [`Learner`] holds the state of both.

mod checkpoint;
mod params;

use std::collections::HashMap;

use rand::Rng;

use crate::env::FeatureMap;
use crate::error::check_index;
use crate::linalg::GramState;
use crate::policy::{soft_max, ActionDistribution};
use crate::{Error, Player, Result};

pub use checkpoint::{read_checkpoints, write_checkpoint, CheckpointEntry};
pub use params::{confidence_log_term, default_hyperparams, temperature_log_factor, HyperParams};

/// One shared observation `(x_h, a_h, b_h, r_l, r_f, x_{h+1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord {
    /// 0-based step.
    pub h: usize,
    pub x: usize,
    pub a: usize,
    pub b: usize,
    pub r_l: f64,
    pub r_f: f64,
    pub x_next: usize,
}

impl TransitionRecord {
    fn reward(&self, player: Player) -> f64 {
        match player {
            Player::Leader => self.r_l,
            Player::Follower => self.r_f,
        }
    }
}

/// Everything the learner computes at one `(h, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEvaluation {
    /// `Q_l(x, a, b)`, indexed `[a][b]`.
    pub q_leader: Vec<Vec<f64>>,
    /// `Q_f(x, a, b)`, indexed `[a][b]`.
    pub q_follower: Vec<Vec<f64>>,
    /// `π_f(·|x, a)` per leader action.
    pub follower_policy: Vec<ActionDistribution>,
    /// `q_l(x, a)`.
    pub marginal_q: Vec<f64>,
    /// `V̄_f(x, a) = Σ_b π_f(b|x,a) Q_f(x,a,b)`.
    pub follower_bar_value: Vec<f64>,
    pub leader_policy: ActionDistribution,
    pub leader_value: f64,
    pub follower_value: f64,
}

pub struct Learner<F> {
    features: F,
    params: HyperParams,
    grams: Vec<GramState>,
    /// `[player][h]`
    weights: [Vec<Vec<f64>>; 2],
    /// per step, all records of past episodes in arrival order
    buffer: Vec<Vec<TransitionRecord>>,
    /// per step, how many buffer records the Gram matrix has absorbed
    absorbed: Vec<usize>,
    /// per step, running `Σ φᵀΛ⁻¹φ` taken before each absorption
    potential: Vec<f64>,
    episode: usize,
}

impl<F: FeatureMap> Learner<F> {
    pub fn new(features: F, params: HyperParams) -> Result<Self> {
        params.validate()?;
        let d = features.dim();
        let horizon = params.horizon;
        let grams = (0..horizon)
            .map(|_| GramState::new(d, params.lambda))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            features,
            params,
            grams,
            weights: [vec![vec![0.0; d]; horizon], vec![vec![0.0; d]; horizon]],
            buffer: vec![Vec::new(); horizon],
            absorbed: vec![0; horizon],
            potential: vec![0.0; horizon],
            episode: 0,
        })
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    pub fn features(&self) -> &F {
        &self.features
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    /// Episode index of the last [`plan`](Self::plan) call (0 before any).
    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn gram(&self, h: usize) -> &GramState {
        &self.grams[h]
    }

    pub fn weights(&self, player: Player, h: usize) -> &[f64] {
        &self.weights[player.index()][h]
    }

    pub fn buffer(&self, h: usize) -> &[TransitionRecord] {
        &self.buffer[h]
    }

    /// Running elliptical potential `Σ_k φ_kᵀ Λ_k⁻¹ φ_k` of step `h`.
    pub fn elliptical_potential(&self, h: usize) -> f64 {
        self.potential[h]
    }

    /// `2H·√(d·k/λ)`, the bound on every weight norm after planning episode `k`.
    pub fn weight_norm_bound(&self, k: usize) -> f64 {
        let d = self.features.dim() as f64;
        2.0 * self.params.horizon as f64 * (d * k as f64 / self.params.lambda).sqrt()
    }

    /// Fits the weights for episode `k` from all records stored so far.
    pub fn plan(&mut self, k: usize) -> Result<()> {
        let horizon = self.params.horizon;
        for h in 0..horizon {
            while self.absorbed[h] < self.buffer[h].len() {
                let rec = self.buffer[h][self.absorbed[h]];
                let phi = self.features.phi(rec.x, rec.a, rec.b)?;
                self.potential[h] += self.grams[h].quad_form(&phi)?;
                self.grams[h].rank_one_update(&phi)?;
                self.absorbed[h] += 1;
            }
        }

        let d = self.features.dim();
        for h in (0..horizon).rev() {
            // successor values under the step-(h+1) weights just fitted
            let mut next_values: HashMap<usize, (f64, f64)> = HashMap::new();
            let mut rhs = [vec![0.0; d], vec![0.0; d]];
            for i in 0..self.buffer[h].len() {
                let rec = self.buffer[h][i];
                let (v_l, v_f) = if h + 1 == horizon {
                    (0.0, 0.0)
                } else if let Some(v) = next_values.get(&rec.x_next) {
                    *v
                } else {
                    let eval = self.evaluate_state(h + 1, rec.x_next)?;
                    let v = (eval.leader_value, eval.follower_value);
                    next_values.insert(rec.x_next, v);
                    v
                };
                let phi = self.features.phi(rec.x, rec.a, rec.b)?;
                for (player, v_next) in [(Player::Leader, v_l), (Player::Follower, v_f)] {
                    let target = rec.reward(player) + v_next;
                    for (acc, p) in rhs[player.index()].iter_mut().zip(phi.iter()) {
                        *acc += p * target;
                    }
                }
            }
            for player in Player::BOTH {
                self.weights[player.index()][h] = self.grams[h].apply_inverse(&rhs[player.index()])?;
            }
        }
        self.episode = k;
        Ok(())
    }

    /// Max-abs difference between the incremental inverse of step `h` and
    /// a Gram matrix rebuilt from the absorbed buffer.
    pub fn gram_rebuild_residual(&self, h: usize) -> Result<f64> {
        let mut rebuilt = GramState::new(self.features.dim(), self.params.lambda)?;
        for rec in &self.buffer[h][..self.absorbed[h]] {
            rebuilt.rank_one_update(&self.features.phi(rec.x, rec.a, rec.b)?)?;
        }
        rebuilt.refresh_inverse();
        let gram = (self.grams[h].gram() - rebuilt.gram()).amax();
        let inv = (self.grams[h].gram_inv() - rebuilt.gram_inv()).amax();
        Ok(gram.max(inv))
    }

    fn check_state_query(&self, h: usize, a: Option<usize>) -> Result<()> {
        check_index("step", h, self.params.horizon)?;
        if let Some(a) = a {
            check_index("leader action", a, self.features.num_leader_actions())?;
        }
        Ok(())
    }

    /// `(Q_l(x,a,·), Q_f(x,a,·))`.
    fn joint_q_row(&self, h: usize, x: usize, a: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let nb = self.features.num_follower_actions();
        let cap = self.params.horizon as f64;
        let w_l = &self.weights[0][h];
        let w_f = &self.weights[1][h];
        let mut q_l = Vec::with_capacity(nb);
        let mut q_f = Vec::with_capacity(nb);
        for b in 0..nb {
            let phi = self.features.phi(x, a, b)?;
            let bonus = self.params.beta * self.grams[h].quad_form(&phi)?.sqrt();
            let dot = |w: &[f64]| w.iter().zip(phi.iter()).map(|(u, v)| u * v).sum::<f64>();
            q_l.push((dot(w_l) + bonus).min(cap));
            q_f.push((dot(w_f) + bonus).min(cap));
        }
        Ok((q_l, q_f))
    }

    /// Clipped optimistic `Q_m(x, a, ·)` at step `h`.
    pub fn q_values(&self, player: Player, h: usize, x: usize, a: usize) -> Result<Vec<f64>> {
        self.check_state_query(h, Some(a))?;
        let (q_l, q_f) = self.joint_q_row(h, x, a)?;
        Ok(match player {
            Player::Leader => q_l,
            Player::Follower => q_f,
        })
    }

    pub fn follower_policy(&self, h: usize, x: usize, a: usize) -> Result<ActionDistribution> {
        soft_max(&self.q_values(Player::Follower, h, x, a)?, self.params.alpha_f)
    }

    pub fn marginal_q(&self, h: usize, x: usize) -> Result<Vec<f64>> {
        Ok(self.evaluate_state(h, x)?.marginal_q)
    }

    pub fn leader_policy(&self, h: usize, x: usize) -> Result<ActionDistribution> {
        Ok(self.evaluate_state(h, x)?.leader_policy)
    }

    /// `V_{m,h}(x)` under the current policies; zero past the horizon.
    pub fn value_at(&self, player: Player, h: usize, x: usize) -> Result<f64> {
        if h == self.params.horizon {
            return Ok(0.0);
        }
        let eval = self.evaluate_state(h, x)?;
        Ok(match player {
            Player::Leader => eval.leader_value,
            Player::Follower => eval.follower_value,
        })
    }

    /// Single evaluation path shared by planning, acting and policy export.
    pub fn evaluate_state(&self, h: usize, x: usize) -> Result<StateEvaluation> {
        self.check_state_query(h, None)?;
        let na = self.features.num_leader_actions();
        let mut q_leader = Vec::with_capacity(na);
        let mut q_follower = Vec::with_capacity(na);
        let mut follower_policy = Vec::with_capacity(na);
        let mut marginal_q = Vec::with_capacity(na);
        let mut follower_bar_value = Vec::with_capacity(na);
        for a in 0..na {
            let (q_l, q_f) = self.joint_q_row(h, x, a)?;
            let pi_f = soft_max(&q_f, self.params.alpha_f)?;
            marginal_q.push(pi_f.expected_value(&q_l)?);
            follower_bar_value.push(pi_f.expected_value(&q_f)?);
            q_leader.push(q_l);
            q_follower.push(q_f);
            follower_policy.push(pi_f);
        }
        let leader_policy = soft_max(&marginal_q, self.params.alpha_l)?;
        let leader_value = leader_policy.expected_value(&marginal_q)?;
        let follower_value = leader_policy.expected_value(&follower_bar_value)?;
        Ok(StateEvaluation {
            q_leader,
            q_follower,
            follower_policy,
            marginal_q,
            follower_bar_value,
            leader_policy,
            leader_value,
            follower_value,
        })
    }

    pub fn act_leader<R: Rng + ?Sized>(&self, h: usize, x: usize, rng: &mut R) -> Result<usize> {
        Ok(self.leader_policy(h, x)?.sample(rng))
    }

    /// Follower's draw after observing the leader's realized action `a`.
    pub fn act_follower<R: Rng + ?Sized>(
        &self,
        h: usize,
        x: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<usize> {
        Ok(self.follower_policy(h, x, a)?.sample(rng))
    }

    /// Stages a record; it takes effect at the next [`plan`](Self::plan).
    pub fn record_transition(&mut self, rec: TransitionRecord) -> Result<()> {
        check_index("step", rec.h, self.params.horizon)?;
        check_index("leader action", rec.a, self.features.num_leader_actions())?;
        check_index("follower action", rec.b, self.features.num_follower_actions())?;
        for r in [rec.r_l, rec.r_f] {
            if !(r.abs() <= 1.0) {
                return Err(Error::InvalidArgument(format!("reward {r} outside [-1, 1]")));
            }
        }
        // features must exist for the recorded triple
        self.features.phi(rec.x, rec.a, rec.b)?;
        self.buffer[rec.h].push(rec);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{tabular_to_linear, FeatureTable, TabularGame};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(horizon: usize, beta: f64, alpha_l: f64, alpha_f: f64) -> HyperParams {
        HyperParams {
            beta,
            c1: 1.0,
            alpha_l,
            alpha_f,
            lambda: 1.0,
            failure_prob: 0.1,
            horizon,
            episodes: 10,
        }
    }

    fn one_hot(s: usize, a: usize, b: usize) -> FeatureTable {
        FeatureTable::one_hot(s, a, b)
    }

    #[test]
    fn cold_start_is_clipped_bonus() {
        let features = one_hot(2, 2, 2);
        let mut learner = Learner::new(&features, params(3, 0.7, 1.0, 1.0)).unwrap();
        learner.plan(1).unwrap();
        for h in 0..3 {
            assert!(learner.weights(Player::Leader, h).iter().all(|w| *w == 0.0));
            assert_eq!(learner.gram(h).gram(), &nalgebra::DMatrix::identity(8, 8));
            for m in Player::BOTH {
                assert_eq!(learner.q_values(m, h, 1, 0).unwrap(), vec![0.7, 0.7]);
            }
        }
        let mut learner = Learner::new(&features, params(2, 5.0, 1.0, 1.0)).unwrap();
        learner.plan(1).unwrap();
        assert_eq!(learner.q_values(Player::Leader, 0, 0, 0).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn single_record_closed_form() {
        // Λ = I + φφᵀ, w = Λ⁻¹ φ r with φ = e_j: w_j = r/2.
        let features = one_hot(1, 1, 2);
        let mut learner = Learner::new(&features, params(1, 1.0, 1.0, 1.0)).unwrap();
        learner
            .record_transition(TransitionRecord { h: 0, x: 0, a: 0, b: 1, r_l: 0.6, r_f: -0.4, x_next: 0 })
            .unwrap();
        learner.plan(2).unwrap();
        assert_eq!(learner.weights(Player::Leader, 0), &[0.0, 0.3]);
        assert_eq!(learner.weights(Player::Follower, 0), &[0.0, -0.2]);

        // non-axis feature: w = φ r / (1 + ‖φ‖²)
        let features = FeatureTable::new(1, 1, 1, 2, vec![vec![0.6, 0.8]]).unwrap();
        let mut learner = Learner::new(&features, params(1, 1.0, 1.0, 1.0)).unwrap();
        learner
            .record_transition(TransitionRecord { h: 0, x: 0, a: 0, b: 0, r_l: 1.0, r_f: 0.5, x_next: 0 })
            .unwrap();
        learner.plan(2).unwrap();
        let w = learner.weights(Player::Leader, 0);
        assert!((w[0] - 0.3).abs() < 1e-15 && (w[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn records_are_staged_until_plan() {
        let features = one_hot(2, 2, 2);
        let mut learner = Learner::new(&features, params(2, 1.0, 1.0, 1.0)).unwrap();
        learner.plan(1).unwrap();
        let before = learner.evaluate_state(0, 0).unwrap();
        learner
            .record_transition(TransitionRecord { h: 0, x: 0, a: 0, b: 0, r_l: 1.0, r_f: 1.0, x_next: 1 })
            .unwrap();
        assert_eq!(learner.evaluate_state(0, 0).unwrap(), before);
        assert_eq!(learner.buffer(0).len(), 1);
        learner.plan(2).unwrap();
        assert_ne!(learner.evaluate_state(0, 0).unwrap(), before);
    }

    #[test]
    fn record_validation() {
        let features = one_hot(2, 2, 2);
        let mut learner = Learner::new(&features, params(2, 1.0, 1.0, 1.0)).unwrap();
        let ok = TransitionRecord { h: 0, x: 0, a: 0, b: 0, r_l: 0.0, r_f: 0.0, x_next: 0 };
        assert!(learner.record_transition(TransitionRecord { h: 2, ..ok }).is_err());
        assert!(learner.record_transition(TransitionRecord { a: 2, ..ok }).is_err());
        assert!(learner.record_transition(TransitionRecord { x: 2, ..ok }).is_err());
        assert!(learner.record_transition(TransitionRecord { r_f: 1.5, ..ok }).is_err());
        assert!(learner.record_transition(TransitionRecord { r_l: f64::NAN, ..ok }).is_err());
        assert!(learner.record_transition(ok).is_ok());
    }

    #[test]
    fn singleton_follower_collapses_marginal() {
        let features = one_hot(1, 3, 1);
        let mut learner = Learner::new(&features, params(1, 1.0, 2.0, 2.0)).unwrap();
        for (a, r) in [(0, 0.5), (1, -0.5), (2, 0.1)] {
            learner
                .record_transition(TransitionRecord { h: 0, x: 0, a, b: 0, r_l: r, r_f: 0.0, x_next: 0 })
                .unwrap();
        }
        learner.plan(2).unwrap();
        let eval = learner.evaluate_state(0, 0).unwrap();
        for a in 0..3 {
            assert_eq!(eval.marginal_q[a], eval.q_leader[a][0]);
            assert_eq!(eval.follower_policy[a].as_point_mass(), Some(0));
        }
    }

    #[test]
    fn constant_follower_q_gives_plain_average() {
        let features = one_hot(1, 1, 3);
        let mut learner = Learner::new(&features, params(1, 0.5, 1.0, 3.0)).unwrap();
        // equal follower rewards on every b, distinct leader rewards
        for (b, r) in [(0, 0.9), (1, -0.3), (2, 0.0)] {
            learner
                .record_transition(TransitionRecord { h: 0, x: 0, a: 0, b, r_l: r, r_f: 0.2, x_next: 0 })
                .unwrap();
        }
        learner.plan(2).unwrap();
        let eval = learner.evaluate_state(0, 0).unwrap();
        let q = &eval.q_leader[0];
        let mean = q.iter().sum::<f64>() / 3.0;
        assert!((eval.marginal_q[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn greedy_temperatures_give_point_masses() {
        let features = one_hot(2, 2, 2);
        let mut learner =
            Learner::new(&features, params(2, 0.1, f64::INFINITY, f64::INFINITY)).unwrap();
        learner
            .record_transition(TransitionRecord { h: 0, x: 0, a: 1, b: 1, r_l: 1.0, r_f: 1.0, x_next: 0 })
            .unwrap();
        learner.plan(2).unwrap();
        let eval = learner.evaluate_state(0, 0).unwrap();
        assert_eq!(eval.leader_policy.as_point_mass(), Some(1));
        assert_eq!(eval.follower_policy[1].as_point_mass(), Some(1));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(learner.act_leader(0, 0, &mut rng).unwrap(), 1);
            assert_eq!(learner.act_follower(0, 0, 1, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn follower_conditions_on_leader_action() {
        let features = one_hot(1, 2, 2);
        let mut learner =
            Learner::new(&features, params(1, 0.1, f64::INFINITY, f64::INFINITY)).unwrap();
        for (a, b, r_f) in [(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)] {
            learner
                .record_transition(TransitionRecord { h: 0, x: 0, a, b, r_l: 0.0, r_f, x_next: 0 })
                .unwrap();
        }
        learner.plan(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(learner.act_follower(0, 0, 0, &mut rng).unwrap(), 0);
        assert_eq!(learner.act_follower(0, 0, 1, &mut rng).unwrap(), 1);
    }

    #[test]
    fn value_boundary_and_degenerate_game() {
        let features = one_hot(2, 1, 1);
        let mut learner = Learner::new(&features, params(2, 0.2, 1.0, 1.0)).unwrap();
        learner
            .record_transition(TransitionRecord { h: 1, x: 1, a: 0, b: 0, r_l: 0.4, r_f: 0.8, x_next: 0 })
            .unwrap();
        learner.plan(2).unwrap();
        assert_eq!(learner.value_at(Player::Leader, 2, 0).unwrap(), 0.0);
        for h in 0..2 {
            for x in 0..2 {
                for m in Player::BOTH {
                    let q = learner.q_values(m, h, x, 0).unwrap()[0];
                    assert_eq!(learner.value_at(m, h, x).unwrap(), q);
                    assert!(q <= 2.0);
                }
            }
        }
    }

    #[test]
    fn replaying_episodes_doubles_buffers() {
        let features = one_hot(2, 2, 2);
        let mut learner = Learner::new(&features, params(2, 1.0, 1.0, 1.0)).unwrap();
        let episode = [
            TransitionRecord { h: 0, x: 0, a: 1, b: 0, r_l: 0.1, r_f: 0.2, x_next: 1 },
            TransitionRecord { h: 1, x: 1, a: 0, b: 1, r_l: 0.3, r_f: 0.4, x_next: 0 },
        ];
        for _ in 0..2 {
            for rec in episode {
                learner.record_transition(rec).unwrap();
            }
        }
        assert_eq!(learner.buffer(0).len(), 2);
        assert_eq!(learner.buffer(1).len(), 2);
        learner.plan(3).unwrap();
        assert_eq!(learner.gram(0).count(), 2);
        assert!(learner.gram_rebuild_residual(0).unwrap() < 1e-12);
    }

    #[test]
    fn tabular_ridge_estimates_concentrate() {
        // last-step follower estimate approaches the true reward with visits
        let game = TabularGame::random(2, 2, 2, 1, 3).unwrap();
        let model = tabular_to_linear(&game).unwrap();
        let features = model.feature_table();
        let mut learner = Learner::new(features, params(1, 0.05, 1.0, 1.0)).unwrap();
        let n = 400;
        for x in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    for _ in 0..n {
                        learner
                            .record_transition(TransitionRecord {
                                h: 0,
                                x,
                                a,
                                b,
                                r_l: model.reward(Player::Leader, 0, x, a, b).unwrap(),
                                r_f: model.reward(Player::Follower, 0, x, a, b).unwrap(),
                                x_next: 0,
                            })
                            .unwrap();
                    }
                }
            }
        }
        learner.plan(n + 1).unwrap();
        let width = 0.05 / ((n + 1) as f64).sqrt();
        for x in 0..2 {
            for a in 0..2 {
                let q = learner.q_values(Player::Follower, 0, x, a).unwrap();
                for b in 0..2 {
                    let r = model.reward(Player::Follower, 0, x, a, b).unwrap();
                    // ridge shrinkage plus the bonus
                    let shrink = r.abs() / (n + 1) as f64;
                    assert!((q[b] - r).abs() <= width + shrink + 1e-12, "{} vs {r}", q[b]);
                }
            }
        }
    }

    #[test]
    fn query_errors() {
        let features = one_hot(2, 2, 2);
        let learner = Learner::new(&features, params(2, 1.0, 1.0, 1.0)).unwrap();
        assert!(learner.q_values(Player::Leader, 2, 0, 0).is_err());
        assert!(learner.q_values(Player::Leader, 0, 0, 2).is_err());
        assert!(learner.evaluate_state(0, 5).is_err());
    }
}
