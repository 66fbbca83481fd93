use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stackrl::env::{random_linear_mdp, tabular_to_linear, FeatureTable, GameShape, LinearMdp, TabularGame};
use stackrl::learner::{default_hyperparams, HyperParams, Learner, TransitionRecord};
use stackrl::Player;

fn params(model: &LinearMdp, episodes: usize, c1: f64) -> HyperParams {
    let s = model.shape();
    default_hyperparams(
        s.feature_dim,
        s.num_leader_actions,
        s.num_follower_actions,
        s.horizon,
        episodes,
        0.1,
        c1,
    )
    .unwrap()
}

/// Plays `episodes` episodes, calling `check` after each plan.
fn drive(
    model: &LinearMdp,
    params: HyperParams,
    episodes: usize,
    seed: u64,
    mut check: impl FnMut(usize, &Learner<&FeatureTable>) -> Result<(), TestCaseError>,
) -> Result<Learner<&FeatureTable>, TestCaseError> {
    let mut learner = Learner::new(model.feature_table(), params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 1..=episodes {
        learner.plan(k).unwrap();
        check(k, &learner)?;
        let mut x = model.initial_state();
        for h in 0..model.shape().horizon {
            let a = learner.act_leader(h, x, &mut rng).unwrap();
            let b = learner.act_follower(h, x, a, &mut rng).unwrap();
            let r_l = model.reward(Player::Leader, h, x, a, b).unwrap();
            let r_f = model.reward(Player::Follower, h, x, a, b).unwrap();
            let x_next = model.transition_sample(h, x, a, b, &mut rng).unwrap();
            learner.record_transition(TransitionRecord { h, x, a, b, r_l, r_f, x_next }).unwrap();
            x = x_next;
        }
    }
    Ok(learner)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn weights_and_values_stay_bounded(model_seed in any::<u64>(), seed in any::<u64>(), c1 in 0.001f64..1.0) {
        let model = random_linear_mdp(
            GameShape { num_states: 3, num_leader_actions: 2, num_follower_actions: 2, horizon: 3, feature_dim: 4 },
            model_seed,
        ).unwrap();
        let p = params(&model, 60, c1);
        let cap = p.horizon as f64;
        drive(&model, p, 60, seed, |k, learner| {
            let bound = learner.weight_norm_bound(k);
            for h in 0..3 {
                for player in Player::BOTH {
                    prop_assert!(norm(learner.weights(player, h)) <= bound);
                    for x in 0..3 {
                        for a in 0..2 {
                            prop_assert!(learner.q_values(player, h, x, a).unwrap().iter().all(|q| *q <= cap));
                        }
                    }
                }
                let gram = learner.gram(h);
                prop_assert!(learner.elliptical_potential(h)
                    <= stackrl::linalg::elliptical_potential_bound(gram.dim(), 1.0, gram.count()));
            }
            Ok(())
        })?;
    }

    #[test]
    fn realized_soft_max_gaps_are_bounded(model_seed in any::<u64>(), seed in any::<u64>()) {
        let model = tabular_to_linear(&TabularGame::random(2, 3, 2, 2, model_seed).unwrap()).unwrap();
        let p = params(&model, 40, 0.05);
        let (alpha_l, alpha_f) = (p.alpha_l, p.alpha_f);
        drive(&model, p, 40, seed, |_, learner| {
            for h in 0..2 {
                for x in 0..2 {
                    let e = learner.evaluate_state(h, x).unwrap();
                    let max = e.marginal_q.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
                    prop_assert!(max - e.leader_value <= 3f64.ln() / alpha_l + 1e-12);
                    for (a, row) in e.q_follower.iter().enumerate() {
                        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
                        prop_assert!(max - e.follower_bar_value[a] <= 2f64.ln() / alpha_f + 1e-12);
                    }
                }
            }
            Ok(())
        })?;
    }

    #[test]
    fn same_seed_same_weights(model_seed in any::<u64>(), seed in any::<u64>()) {
        let model = tabular_to_linear(&TabularGame::random(2, 2, 2, 2, model_seed).unwrap()).unwrap();
        let a = drive(&model, params(&model, 25, 0.1), 25, seed, |_, _| Ok(()))?;
        let b = drive(&model, params(&model, 25, 0.1), 25, seed, |_, _| Ok(()))?;
        for h in 0..2 {
            for player in Player::BOTH {
                prop_assert_eq!(a.weights(player, h), b.weights(player, h));
            }
        }
    }
}

#[test]
fn greedy_learner_plays_point_masses() {
    let model = tabular_to_linear(&TabularGame::random(2, 2, 2, 3, 9).unwrap()).unwrap();
    let mut p = params(&model, 50, 0.05);
    p.alpha_l = f64::INFINITY;
    p.alpha_f = f64::INFINITY;
    let learner = drive(&model, p, 50, 1, |_, _| Ok(())).unwrap();
    for h in 0..3 {
        for x in 0..2 {
            let e = learner.evaluate_state(h, x).unwrap();
            assert!(e.leader_policy.as_point_mass().is_some());
            assert!(e.follower_policy.iter().all(|d| d.as_point_mass().is_some()));
        }
    }
}

#[test]
fn rebuilt_gram_matches_incremental_inverse() {
    let model = tabular_to_linear(&TabularGame::random(3, 2, 2, 2, 5).unwrap()).unwrap();
    let learner = drive(&model, params(&model, 300, 0.05), 300, 2, |_, _| Ok(())).unwrap();
    for h in 0..2 {
        assert!(learner.gram_rebuild_residual(h).unwrap() < 1e-9);
        assert!(learner.gram(h).identity_residual() < 1e-8);
    }
}
