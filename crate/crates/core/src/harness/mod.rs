//! End-to-end experiments: run `K` episodes of the learner against a
//! ground-truth model and account both players' regret with the exact
//! oracles.
//!
//! Each episode `k` goes plan, materialize, roll out. The policies
//! materialized right after planning are the ones that act, so the regret
//! increments of episode `k` are
//!
//! ```text
//! leader:   V_l^{BR_l(π_f^k), π_f^k}(x₁ᵏ)        − V_l^{π_l^k, π_f^k}(x₁ᵏ)
//! follower: V̄_f^{π_l^k, BR_f(π_l^k)}(x₁ᵏ, a₁ᵏ)  − V̄_f^{π_l^k, π_f^k}(x₁ᵏ, a₁ᵏ)
//! ```
//!
//! where `a₁ᵏ` is the leader's realized first action.
//!
//! Randomness comes from one master seed split into independent ChaCha
//! streams: environment transitions, leader draws, follower draws and the
//! initial state. Reruns with the same config are bit-identical.

mod fixture;
mod output;
mod settings;
mod sweep;

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{FeatureTable, LinearMdp};
use crate::learner::{write_checkpoint, HyperParams, Learner, StateEvaluation, TransitionRecord};
use crate::linalg::elliptical_potential_bound;
use crate::oracle::{
    best_response_follower, best_response_leader, evaluate_joint, materialize_learner_evaluations,
    PolicyTable,
};
use crate::policy::{inverse_cdf, ActionDistribution};
use crate::{Error, Player, Result};

pub use fixture::{greedy_failure_fixture, FixtureReport};
pub use output::{read_csv, summarize, write_csv, RegretSummary, CSV_HEADER};
pub use settings::{ExperimentConfig, Mode, ModelSource};
pub use sweep::{run_sweep, write_sweep_csv, write_sweep_summary, SweepAxis, SweepCell, SweepGrid};

/// Slack for the best-response dominance check.
pub const DOMINANCE_TOL: f64 = 1e-9;
/// Slack for the remaining runtime invariants.
pub const INVARIANT_TOL: f64 = 1e-9;

const ENV_STREAM: u64 = 0;
const LEADER_STREAM: u64 = 1;
const FOLLOWER_STREAM: u64 = 2;
const INITIAL_STREAM: u64 = 3;

/// One row of a regret trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretRecord {
    /// 1-based episode.
    pub k: usize,
    pub leader_inc: f64,
    pub leader_cum: f64,
    pub follower_inc: f64,
    pub follower_cum: f64,
    /// Leader's realized first action.
    pub a1: usize,
    pub wall_ms: f64,
    /// Initial state of the episode.
    pub x1: usize,
    /// False when the increments were carried forward from the last
    /// evaluated episode.
    pub evaluated: bool,
}

/// Policies acting in one episode.
struct EpisodePolicies {
    table: PolicyTable,
    evaluations: Option<Vec<Vec<StateEvaluation>>>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs the configured experiment on a freshly loaded model.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RegretRecord>> {
    config.validate()?;
    let model = config.load_model()?;
    run_on_model(config, &model)
}

/// Runs the experiment on an already built model; the config's model
/// source is ignored.
pub fn run_on_model(config: &ExperimentConfig, model: &LinearMdp) -> Result<Vec<RegretRecord>> {
    config.validate()?;
    let shape = *model.shape();
    let initial = initial_distribution(config, model)?;
    let params = config.hyperparams(model)?;
    let mut learner = match config.mode {
        Mode::Uniform => None,
        _ => Some(Learner::new(model.feature_table(), params)?),
    };
    let mut checkpoint = match &config.checkpoint {
        Some(path) => Some(std::io::BufWriter::new(std::fs::File::create(path)?)),
        None => None,
    };

    let mut env_rng = stream(config.seed, ENV_STREAM);
    let mut leader_rng = stream(config.seed, LEADER_STREAM);
    let mut follower_rng = stream(config.seed, FOLLOWER_STREAM);
    let mut initial_rng = stream(config.seed, INITIAL_STREAM);

    let uniform = PolicyTable::uniform(&shape);
    let mut records = Vec::with_capacity(config.episodes);
    let (mut leader_cum, mut follower_cum) = (0.0, 0.0);
    let (mut leader_inc, mut follower_inc) = (0.0, 0.0);

    for k in 1..=config.episodes {
        let start = Instant::now();
        let policies = match learner.as_mut() {
            Some(learner) => {
                learner.plan(k)?;
                if let Some(out) = checkpoint.as_mut() {
                    write_checkpoint(learner, out)?;
                }
                if config.check_invariants {
                    check_learner(learner, k)?;
                }
                let (table, evaluations) = materialize_learner_evaluations(learner, model)?;
                EpisodePolicies { table, evaluations: Some(evaluations) }
            }
            None => EpisodePolicies { table: uniform.clone(), evaluations: None },
        };
        let evaluated = (k - 1) % config.cadence == 0;
        if evaluated && config.check_invariants {
            if let Some(evaluations) = &policies.evaluations {
                check_evaluations(evaluations, &params)?;
            }
        }

        let x1 = inverse_cdf(initial.probs(), initial_rng.random::<f64>());
        let a1 = rollout(
            model,
            &policies.table,
            learner.as_mut(),
            x1,
            &mut env_rng,
            &mut leader_rng,
            &mut follower_rng,
        )?;

        if evaluated {
            (leader_inc, follower_inc) = regret_increments(model, &policies.table, x1, a1)?;
            if config.check_invariants {
                for (player, inc) in [(Player::Leader, leader_inc), (Player::Follower, follower_inc)] {
                    if inc < -DOMINANCE_TOL {
                        return Err(Error::InvariantViolation(format!(
                            "episode {k}: {player} regret increment {inc:e} is negative"
                        )));
                    }
                }
            }
        }
        leader_cum += leader_inc;
        follower_cum += follower_inc;
        let wall_ms = if config.wall_clock {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        records.push(RegretRecord {
            k,
            leader_inc,
            leader_cum,
            follower_inc,
            follower_cum,
            a1,
            wall_ms,
            x1,
            evaluated,
        });
    }
    if let Some(mut out) = checkpoint {
        out.flush()?;
    }
    Ok(records)
}

fn initial_distribution(config: &ExperimentConfig, model: &LinearMdp) -> Result<ActionDistribution> {
    let ns = model.shape().num_states;
    match &config.initial_distribution {
        Some(probs) if probs.len() != ns => Err(Error::DimensionMismatch {
            expected: ns,
            got: probs.len(),
        }),
        Some(probs) => ActionDistribution::new(probs.clone()),
        None => Ok(ActionDistribution::point_mass(ns, model.initial_state())),
    }
}

/// Plays one episode from `x1` and stages every transition with the
/// learner. Returns the leader's first action.
fn rollout(
    model: &LinearMdp,
    policy: &PolicyTable,
    mut learner: Option<&mut Learner<&FeatureTable>>,
    x1: usize,
    env_rng: &mut ChaCha8Rng,
    leader_rng: &mut ChaCha8Rng,
    follower_rng: &mut ChaCha8Rng,
) -> Result<usize> {
    let mut x = x1;
    let mut first = 0;
    for h in 0..model.shape().horizon {
        let a = policy.leader[h][x].sample(leader_rng);
        let b = policy.follower[h][x][a].sample(follower_rng);
        if h == 0 {
            first = a;
        }
        let r_l = model.reward(Player::Leader, h, x, a, b)?;
        let r_f = model.reward(Player::Follower, h, x, a, b)?;
        let x_next = model.transition_sample(h, x, a, b, env_rng)?;
        if let Some(learner) = learner.as_deref_mut() {
            learner.record_transition(TransitionRecord { h, x, a, b, r_l, r_f, x_next })?;
        }
        x = x_next;
    }
    Ok(first)
}

/// Both players' regret increments for playing `policy` from `x1` with
/// realized first leader action `a1`.
pub fn regret_increments(model: &LinearMdp, policy: &PolicyTable, x1: usize, a1: usize) -> Result<(f64, f64)> {
    let joint = evaluate_joint(model, policy)?;
    let leader_best = best_response_leader(model, &policy.follower)?.value(x1);
    let follower_best = best_response_follower(model, &policy.leader)?.values.bar_v_f(0, x1, a1);
    Ok((
        leader_best - joint.v(Player::Leader, 0, x1),
        follower_best - joint.bar_v_f(0, x1, a1),
    ))
}

/// Weight norms and the elliptical potential after planning episode `k`.
fn check_learner(learner: &Learner<&FeatureTable>, k: usize) -> Result<()> {
    let bound = learner.weight_norm_bound(k);
    let lambda = learner.params().lambda;
    for h in 0..learner.horizon() {
        for player in Player::BOTH {
            let norm = learner.weights(player, h).iter().map(|w| w * w).sum::<f64>().sqrt();
            if norm > bound * (1.0 + INVARIANT_TOL) {
                return Err(Error::InvariantViolation(format!(
                    "episode {k}, step {}: {player} weight norm {norm} exceeds {bound}",
                    h + 1
                )));
            }
        }
        if lambda >= 1.0 {
            let gram = learner.gram(h);
            let potential = learner.elliptical_potential(h);
            let limit = elliptical_potential_bound(gram.dim(), lambda, gram.count());
            if potential > limit + INVARIANT_TOL {
                return Err(Error::InvariantViolation(format!(
                    "episode {k}, step {}: elliptical potential {potential} exceeds {limit} after {} updates",
                    h + 1,
                    gram.count()
                )));
            }
        }
    }
    Ok(())
}

/// Value clipping and realized soft-max gaps at every `(h, x)`.
fn check_evaluations(evaluations: &[Vec<StateEvaluation>], params: &HyperParams) -> Result<()> {
    let cap = params.horizon as f64;
    for (h, per_state) in evaluations.iter().enumerate() {
        for (x, eval) in per_state.iter().enumerate() {
            let at = || format!("step {}, state {x}", h + 1);
            let max_q = eval
                .q_leader
                .iter()
                .chain(&eval.q_follower)
                .flatten()
                .fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            if max_q > cap + INVARIANT_TOL {
                return Err(Error::InvariantViolation(format!("{}: Q value {max_q} exceeds {cap}", at())));
            }
            let gap = max_of(&eval.marginal_q) - eval.leader_value;
            let limit = gap_bound(eval.marginal_q.len(), params.alpha_l);
            if gap > limit + INVARIANT_TOL {
                return Err(Error::InvariantViolation(format!(
                    "{}: leader soft-max gap {gap} exceeds {limit}",
                    at()
                )));
            }
            for (a, row) in eval.q_follower.iter().enumerate() {
                let gap = max_of(row) - eval.follower_bar_value[a];
                let limit = gap_bound(row.len(), params.alpha_f);
                if gap > limit + INVARIANT_TOL {
                    return Err(Error::InvariantViolation(format!(
                        "{}, leader action {a}: follower soft-max gap {gap} exceeds {limit}",
                        at()
                    )));
                }
            }
        }
    }
    Ok(())
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
}

/// `log(n)/α`; zero for greedy play.
fn gap_bound(n: usize, alpha: f64) -> f64 {
    if alpha == f64::INFINITY {
        0.0
    } else {
        (n as f64).ln() / alpha
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{tabular_to_linear, GameShape, TabularGame};

    fn small_config(episodes: usize) -> ExperimentConfig {
        ExperimentConfig {
            model: ModelSource::Tabular { seed: 3 },
            shape: GameShape {
                num_states: 2,
                num_leader_actions: 2,
                num_follower_actions: 2,
                horizon: 2,
                feature_dim: 8,
            },
            episodes,
            c1: 0.05,
            seed: 11,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn cumulative_sums_accumulate_increments() {
        let records = run_experiment(&small_config(30)).unwrap();
        assert_eq!(records.len(), 30);
        let (mut l, mut f) = (0.0, 0.0);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.k, i + 1);
            assert!(r.leader_inc >= -DOMINANCE_TOL && r.follower_inc >= -DOMINANCE_TOL);
            l += r.leader_inc;
            f += r.follower_inc;
            assert_eq!(r.leader_cum, l);
            assert_eq!(r.follower_cum, f);
            assert_eq!(r.wall_ms, 0.0);
            assert!(r.evaluated);
            assert_eq!(r.x1, 0);
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let a = run_experiment(&small_config(20)).unwrap();
        let b = run_experiment(&small_config(20)).unwrap();
        assert_eq!(a, b);
        let mut other = small_config(20);
        other.seed = 12;
        assert_ne!(run_experiment(&other).unwrap(), a);
    }

    #[test]
    fn zero_reward_model_has_no_regret() {
        let mut game = TabularGame::random(2, 2, 2, 2, 5).unwrap();
        for step in game.rewards_l.iter_mut().chain(game.rewards_f.iter_mut()) {
            step.iter_mut().for_each(|r| *r = 0.0);
        }
        let model = tabular_to_linear(&game).unwrap();
        for mode in [Mode::SoftMax, Mode::Greedy, Mode::Uniform] {
            let config = ExperimentConfig { mode, ..small_config(15) };
            for r in run_on_model(&config, &model).unwrap() {
                assert_eq!((r.leader_inc, r.follower_inc), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn singleton_actions_have_no_regret() {
        let game = TabularGame::random(3, 1, 1, 3, 8).unwrap();
        let model = tabular_to_linear(&game).unwrap();
        for r in run_on_model(&small_config(15), &model).unwrap() {
            assert!(r.leader_inc.abs() < 1e-12 && r.follower_inc.abs() < 1e-12);
            assert_eq!(r.a1, 0);
        }
    }

    #[test]
    fn cadence_holds_the_last_increment() {
        let mut config = small_config(10);
        config.cadence = 3;
        let records = run_experiment(&config).unwrap();
        let flags: Vec<bool> = records.iter().map(|r| r.evaluated).collect();
        assert_eq!(
            flags,
            [true, false, false, true, false, false, true, false, false, true]
        );
        for pair in records.windows(2) {
            if !pair[1].evaluated {
                assert_eq!(pair[1].leader_inc, pair[0].leader_inc);
                assert_eq!(pair[1].follower_inc, pair[0].follower_inc);
            }
        }
        // the learner trajectory does not depend on the cadence
        let full = run_experiment(&small_config(10)).unwrap();
        for (a, b) in records.iter().zip(&full) {
            assert_eq!(a.a1, b.a1);
            if a.evaluated {
                assert_eq!(a.leader_inc, b.leader_inc);
            }
        }
    }

    #[test]
    fn initial_distribution_is_sampled() {
        let mut config = small_config(200);
        config.initial_distribution = Some(vec![0.5, 0.5]);
        let records = run_experiment(&config).unwrap();
        let ones = records.iter().filter(|r| r.x1 == 1).count();
        assert!((60..=140).contains(&ones), "{ones}");

        config.initial_distribution = Some(vec![1.0, 0.0, 0.0]);
        assert!(matches!(run_experiment(&config), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn greedy_and_uniform_modes_run() {
        for mode in [Mode::Greedy, Mode::Uniform] {
            let config = ExperimentConfig { mode, ..small_config(25) };
            let records = run_experiment(&config).unwrap();
            assert_eq!(records.len(), 25);
            assert!(records.iter().all(|r| r.leader_cum.is_finite() && r.follower_cum.is_finite()));
        }
    }

    #[test]
    fn regret_of_the_stackelberg_policy_is_zero_for_the_leader() {
        let game = TabularGame::random(2, 2, 2, 3, 4).unwrap();
        let model = tabular_to_linear(&game).unwrap();
        let (policy, _) = crate::oracle::stackelberg_solve(&model);
        for a1 in 0..2 {
            let (l, f) = regret_increments(&model, &policy, 0, a1).unwrap();
            assert!(l.abs() < 1e-12);
            assert!(f.abs() < 1e-12);
        }
    }

    #[test]
    fn gap_bound_is_log_n_over_alpha() {
        assert_eq!(gap_bound(4, f64::INFINITY), 0.0);
        assert!((gap_bound(4, 2.0) - 4f64.ln() / 2.0).abs() < 1e-15);
        assert_eq!(gap_bound(1, 0.5), 0.0);
    }

    #[test]
    fn checkpoints_are_written_per_episode() {
        let dir = std::env::temp_dir().join(format!("stackrl-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("weights.txt");
        let config = ExperimentConfig { checkpoint: Some(path.clone()), ..small_config(4) };
        run_experiment(&config).unwrap();
        let entries = crate::learner::read_checkpoints(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(entries.len(), 4 * 2);
        assert_eq!(entries.last().unwrap().episode, 4);
        std::fs::remove_dir_all(dir).unwrap();
    }
}
