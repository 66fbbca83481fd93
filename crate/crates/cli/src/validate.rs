//! Property suite behind `stackrl validate`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stackrl::env::{tabular_to_linear, GameShape, TabularGame};
use stackrl::harness::{run_experiment, ExperimentConfig, ModelSource};
use stackrl::linalg::{elliptical_potential_bound, GramState};
use stackrl::oracle::{
    best_response_follower, best_response_leader, brute_force_enumerate, evaluate_joint, stackelberg_solve,
    PolicyTable,
};
use stackrl::policy::{soft_max, ActionDistribution};
use stackrl::Player;

type Check = fn(&mut ChaCha8Rng) -> Result<(), String>;

const PROPERTIES: &[(&str, Check)] = &[
    ("linalg.sherman_morrison", sherman_morrison),
    ("linalg.elliptical_potential", elliptical_potential),
    ("policy.simplex", softmax_simplex),
    ("policy.lipschitz", softmax_lipschitz),
    ("policy.log_sum_exp_gap", softmax_gap),
    ("env.tabular_embedding", tabular_embedding),
    ("oracle.brute_force", oracle_brute_force),
    ("oracle.best_response_dominance", oracle_dominance),
    ("learner.runtime_invariants", learner_invariants),
    ("learner.determinism", learner_determinism),
];

/// Runs every property, prints `PASS name` or `FAIL name: detail`, and
/// returns the number of failures.
pub fn run_all(seed: u64) -> usize {
    let mut failed = 0;
    for (i, (name, check)) in PROPERTIES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        match check(&mut rng) {
            Ok(()) => println!("PASS {name}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    failed
}

fn unit_ball(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = rng.random::<f64>() / norm.max(1e-12);
    v.iter().map(|x| x * scale).collect()
}

fn sherman_morrison(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let d = 16;
    let mut gram = GramState::new(d, 1.0).map_err(|e| e.to_string())?;
    for _ in 0..1000 {
        gram.rank_one_update(&unit_ball(rng, d)).map_err(|e| e.to_string())?;
    }
    let direct = gram.gram().clone().try_inverse().ok_or("Gram matrix not invertible")?;
    let rel = (gram.gram_inv() - &direct).amax() / direct.amax();
    if rel <= 1e-8 {
        Ok(())
    } else {
        Err(format!("relative error {rel:e}"))
    }
}

fn elliptical_potential(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let d = 6;
    let mut gram = GramState::new(d, 1.0).map_err(|e| e.to_string())?;
    let mut sum = 0.0;
    for k in 1..=2000 {
        let phi = unit_ball(rng, d);
        sum += gram.quad_form(&phi).map_err(|e| e.to_string())?;
        gram.rank_one_update(&phi).map_err(|e| e.to_string())?;
        let bound = elliptical_potential_bound(d, 1.0, k);
        if sum > bound {
            return Err(format!("after {k} updates potential {sum} exceeds {bound}"));
        }
    }
    Ok(())
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
}

const ALPHAS: [f64; 3] = [0.1, 1.0, 10.0];

fn softmax_simplex(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..2000 {
        let n = rng.random_range(1..=8);
        let x = random_vector(rng, n);
        for alpha in [0.0, 0.1, 1.0, 10.0, 1e4, f64::INFINITY] {
            let p = soft_max(&x, alpha).map_err(|e| e.to_string())?;
            let total: f64 = p.probs().iter().sum();
            if p.probs().iter().any(|q| *q < 0.0) || (total - 1.0).abs() > 1e-12 {
                return Err(format!("alpha {alpha}: {:?}", p.probs()));
            }
        }
    }
    Ok(())
}

fn softmax_lipschitz(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..3000 {
        let n = rng.random_range(1..=8);
        let x = random_vector(rng, n);
        let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
        let sup = x.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        for alpha in ALPHAS {
            let p = soft_max(&x, alpha).map_err(|e| e.to_string())?;
            let q = soft_max(&y, alpha).map_err(|e| e.to_string())?;
            let l1: f64 = p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).sum();
            if l1 > 2.0 * alpha * sup + 1e-12 {
                return Err(format!("alpha {alpha}: l1 {l1} > {}", 2.0 * alpha * sup));
            }
        }
    }
    Ok(())
}

fn softmax_gap(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..3000 {
        let n = rng.random_range(1..=8);
        let x = random_vector(rng, n);
        let max = x.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        for alpha in ALPHAS {
            let p = soft_max(&x, alpha).map_err(|e| e.to_string())?;
            let gap = max - p.expected_value(&x).map_err(|e| e.to_string())?;
            let bound = (n as f64).ln() / alpha;
            if gap > bound + 1e-12 {
                return Err(format!("alpha {alpha}: gap {gap} > {bound}"));
            }
        }
    }
    Ok(())
}

fn tabular_embedding(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..10 {
        let (s, a, b, h) = (
            rng.random_range(1..=4),
            rng.random_range(1..=3),
            rng.random_range(1..=3),
            rng.random_range(1..=3),
        );
        let game = TabularGame::random(s, a, b, h, rng.random()).map_err(|e| e.to_string())?;
        let model = tabular_to_linear(&game).map_err(|e| e.to_string())?;
        let shape = *model.shape();
        for step in 0..h {
            for x in 0..s {
                for i in 0..a {
                    for j in 0..b {
                        let t = shape.triple_index(x, i, j);
                        let row = model.transition_distribution(step, x, i, j).map_err(|e| e.to_string())?;
                        let err = row
                            .iter()
                            .zip(&game.transitions[step][t])
                            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
                        let r_l = model.reward(Player::Leader, step, x, i, j).map_err(|e| e.to_string())?;
                        let r_f = model.reward(Player::Follower, step, x, i, j).map_err(|e| e.to_string())?;
                        let err = err
                            .max((r_l - game.rewards_l[step][t]).abs())
                            .max((r_f - game.rewards_f[step][t]).abs());
                        if err > 1e-15 {
                            return Err(format!("step {step} triple {t}: error {err:e}"));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn oracle_brute_force(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..20 {
        let game = TabularGame::random(2, 2, 2, 2, rng.random()).map_err(|e| e.to_string())?;
        let model = tabular_to_linear(&game).map_err(|e| e.to_string())?;
        let (_, solved) = stackelberg_solve(&model);
        let (_, brute) = brute_force_enumerate(&model).map_err(|e| e.to_string())?;
        let x = model.initial_state();
        let diff = (solved.v(Player::Leader, 0, x) - brute.v(Player::Leader, 0, x)).abs();
        if diff > 1e-9 {
            return Err(format!("leader values differ by {diff:e}"));
        }
    }
    Ok(())
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> ActionDistribution {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    ActionDistribution::new(w.iter().map(|v| v / total).collect()).expect("normalized weights")
}

fn random_policy(rng: &mut ChaCha8Rng, shape: &GameShape) -> PolicyTable {
    let mut table = PolicyTable::uniform(shape);
    for step in table.leader.iter_mut() {
        for d in step.iter_mut() {
            *d = random_distribution(rng, shape.num_leader_actions);
        }
    }
    for step in table.follower.iter_mut() {
        for d in step.iter_mut().flatten() {
            *d = random_distribution(rng, shape.num_follower_actions);
        }
    }
    table
}

fn oracle_dominance(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let game = TabularGame::random(3, 2, 3, 3, rng.random()).map_err(|e| e.to_string())?;
    let model = tabular_to_linear(&game).map_err(|e| e.to_string())?;
    let shape = *model.shape();
    for _ in 0..100 {
        let policy = random_policy(rng, &shape);
        let joint = evaluate_joint(&model, &policy).map_err(|e| e.to_string())?;
        let br_l = best_response_leader(&model, &policy.follower).map_err(|e| e.to_string())?;
        let br_f = best_response_follower(&model, &policy.leader).map_err(|e| e.to_string())?;
        for x in 0..shape.num_states {
            if br_l.value(x) < joint.v(Player::Leader, 0, x) - 1e-9 {
                return Err(format!("leader best response loses at state {x}"));
            }
            for (a, v) in br_f.bar_values(x).iter().enumerate() {
                if *v < joint.bar_v_f(0, x, a) - 1e-9 {
                    return Err(format!("follower best response loses at state {x}, action {a}"));
                }
            }
        }
    }
    Ok(())
}

fn short_config(rng: &mut ChaCha8Rng) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSource::Tabular { seed: rng.random() },
        shape: GameShape {
            num_states: 2,
            num_leader_actions: 2,
            num_follower_actions: 2,
            horizon: 3,
            feature_dim: 8,
        },
        episodes: 150,
        c1: 0.05,
        seed: rng.random(),
        check_invariants: true,
        ..ExperimentConfig::default()
    }
}

fn learner_invariants(rng: &mut ChaCha8Rng) -> Result<(), String> {
    // weight norms, elliptical potential, soft-max gaps and regret
    // dominance are all checked inside the run
    run_experiment(&short_config(rng)).map(|_| ()).map_err(|e| e.to_string())
}

fn learner_determinism(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let config = ExperimentConfig { episodes: 40, ..short_config(rng) };
    let a = run_experiment(&config).map_err(|e| e.to_string())?;
    let b = run_experiment(&config).map_err(|e| e.to_string())?;
    if a == b {
        Ok(())
    } else {
        Err("two runs with the same seed differ".into())
    }
}
