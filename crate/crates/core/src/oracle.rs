//! Exact dynamic programming on finite linear MDPs.
//!
//! Every routine here is one backward pass over `h = H..1` that, at each
//! step, either follows a given policy or plays greedily:
//!
//! | routine                  | leader   | follower |
//! |--------------------------|----------|----------|
//! | [`evaluate_joint`]       | given    | given    |
//! | [`stackelberg_solve`]    | greedy   | greedy   |
//! | [`best_response_leader`] | greedy   | given    |
//! | [`best_response_follower`] | given  | greedy   |
//!
//! The follower is greedy on `Q_f(x, a, ·)` for every leader action; the
//! leader is greedy on its marginal `q_l(x, a) = Σ_b π_f(b|x,a) Q_l(x,a,b)`.
//! Ties go to the lowest index. [`brute_force_enumerate`] recovers the
//! backward-induction solution independently by enumerating deterministic
//! policy profiles.

use crate::env::{GameShape, LinearMdp};
use crate::learner::{Learner, StateEvaluation};
use crate::env::FeatureMap;
use crate::policy::{argmax, ActionDistribution};
use crate::{Error, Player, Result};

/// Stochastic policies of both players over a finite game.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    /// `π_l(·|x)` indexed `[h][x]`.
    pub leader: Vec<Vec<ActionDistribution>>,
    /// `π_f(·|x, a)` indexed `[h][x][a]`.
    pub follower: Vec<Vec<Vec<ActionDistribution>>>,
}

impl PolicyTable {
    pub fn uniform(shape: &GameShape) -> Self {
        Self {
            leader: vec![
                vec![ActionDistribution::uniform(shape.num_leader_actions); shape.num_states];
                shape.horizon
            ],
            follower: vec![
                vec![
                    vec![ActionDistribution::uniform(shape.num_follower_actions); shape.num_leader_actions];
                    shape.num_states
                ];
                shape.horizon
            ],
        }
    }

    pub fn validate(&self, shape: &GameShape) -> Result<()> {
        validate_leader(&self.leader, shape)?;
        validate_follower(&self.follower, shape)
    }
}

fn validate_leader(leader: &[Vec<ActionDistribution>], shape: &GameShape) -> Result<()> {
    let bad = |what: &str| Err(Error::InvalidArgument(format!("leader policy {what}")));
    if leader.len() != shape.horizon {
        return bad("has the wrong number of steps");
    }
    for per_state in leader {
        if per_state.len() != shape.num_states {
            return bad("has the wrong number of states");
        }
        if per_state.iter().any(|d| d.support_size() != shape.num_leader_actions) {
            return bad("has the wrong support size");
        }
    }
    Ok(())
}

fn validate_follower(follower: &[Vec<Vec<ActionDistribution>>], shape: &GameShape) -> Result<()> {
    let bad = |what: &str| Err(Error::InvalidArgument(format!("follower policy {what}")));
    if follower.len() != shape.horizon {
        return bad("has the wrong number of steps");
    }
    for per_state in follower {
        if per_state.len() != shape.num_states {
            return bad("has the wrong number of states");
        }
        for per_action in per_state {
            if per_action.len() != shape.num_leader_actions {
                return bad("has the wrong number of leader actions");
            }
            if per_action.iter().any(|d| d.support_size() != shape.num_follower_actions) {
                return bad("has the wrong support size");
            }
        }
    }
    Ok(())
}

/// Value functions of a joint policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    shape: GameShape,
    /// `[player][h][triple]`
    q: [Vec<Vec<f64>>; 2],
    /// `q_l(x, a)`, `[h][x·|A| + a]`
    marginal_q: Vec<Vec<f64>>,
    /// `V̄_f(x, a)`, `[h][x·|A| + a]`
    bar_v_f: Vec<Vec<f64>>,
    /// `[player][h][x]` for `h = 0..=H`, the last row zero
    v: [Vec<Vec<f64>>; 2],
}

impl ValueTables {
    pub fn shape(&self) -> &GameShape {
        &self.shape
    }

    pub fn q(&self, player: Player, h: usize, x: usize, a: usize, b: usize) -> f64 {
        self.q[player.index()][h][self.shape.triple_index(x, a, b)]
    }

    pub fn marginal_q(&self, h: usize, x: usize, a: usize) -> f64 {
        self.marginal_q[h][x * self.shape.num_leader_actions + a]
    }

    pub fn bar_v_f(&self, h: usize, x: usize, a: usize) -> f64 {
        self.bar_v_f[h][x * self.shape.num_leader_actions + a]
    }

    /// `V_{m,h}(x)`; `h = H` is the zero terminal row.
    pub fn v(&self, player: Player, h: usize, x: usize) -> f64 {
        self.v[player.index()][h][x]
    }
}

enum Rule<'a, T> {
    Given(&'a T),
    Greedy,
}

type LeaderTable = Vec<Vec<ActionDistribution>>;
type FollowerTable = Vec<Vec<Vec<ActionDistribution>>>;

fn backward(
    model: &LinearMdp,
    leader: Rule<'_, LeaderTable>,
    follower: Rule<'_, FollowerTable>,
) -> (PolicyTable, ValueTables) {
    let shape = *model.shape();
    let (ns, na, nb, horizon) = (
        shape.num_states,
        shape.num_leader_actions,
        shape.num_follower_actions,
        shape.horizon,
    );
    let triples = shape.num_triples();

    let mut q = [vec![Vec::new(); horizon], vec![Vec::new(); horizon]];
    let mut marginal_q = vec![Vec::new(); horizon];
    let mut bar_v_f = vec![Vec::new(); horizon];
    let mut v = [vec![vec![0.0; ns]; horizon + 1], vec![vec![0.0; ns]; horizon + 1]];
    let mut leader_out: LeaderTable = vec![Vec::with_capacity(ns); horizon];
    let mut follower_out: FollowerTable = vec![Vec::with_capacity(ns); horizon];

    for h in (0..horizon).rev() {
        for player in Player::BOTH {
            let next = &v[player.index()][h + 1];
            q[player.index()][h] = (0..triples)
                .map(|j| {
                    let row = model.transition_row(h, j);
                    let future: f64 = row.iter().zip(next).map(|(p, val)| p * val).sum();
                    model.reward_at(player, h, j) + future
                })
                .collect();
        }
        let mut mq = Vec::with_capacity(ns * na);
        let mut bv = Vec::with_capacity(ns * na);
        for x in 0..ns {
            let mut per_action = Vec::with_capacity(na);
            for a in 0..na {
                let base = shape.triple_index(x, a, 0);
                let q_l = &q[0][h][base..base + nb];
                let q_f = &q[1][h][base..base + nb];
                let pi_f = match &follower {
                    Rule::Given(table) => table[h][x][a].clone(),
                    Rule::Greedy => ActionDistribution::point_mass(nb, argmax(q_f)),
                };
                // lengths match by construction
                mq.push(pi_f.expected_value(q_l).unwrap());
                bv.push(pi_f.expected_value(q_f).unwrap());
                per_action.push(pi_f);
            }
            follower_out[h].push(per_action);

            let q_row = &mq[x * na..(x + 1) * na];
            let pi_l = match &leader {
                Rule::Given(table) => table[h][x].clone(),
                Rule::Greedy => ActionDistribution::point_mass(na, argmax(q_row)),
            };
            v[0][h][x] = pi_l.expected_value(q_row).unwrap();
            v[1][h][x] = pi_l.expected_value(&bv[x * na..(x + 1) * na]).unwrap();
            leader_out[h].push(pi_l);
        }
        marginal_q[h] = mq;
        bar_v_f[h] = bv;
    }

    (
        PolicyTable {
            leader: leader_out,
            follower: follower_out,
        },
        ValueTables {
            shape,
            q,
            marginal_q,
            bar_v_f,
            v,
        },
    )
}

/// Values of a fixed joint policy.
pub fn evaluate_joint(model: &LinearMdp, policy: &PolicyTable) -> Result<ValueTables> {
    policy.validate(model.shape())?;
    Ok(backward(model, Rule::Given(&policy.leader), Rule::Given(&policy.follower)).1)
}

/// Stackelberg policies by backward induction.
pub fn stackelberg_solve(model: &LinearMdp) -> (PolicyTable, ValueTables) {
    backward(model, Rule::Greedy, Rule::Greedy)
}

/// Leader's best response to a fixed follower policy.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderResponse {
    pub policy: LeaderTable,
    pub values: ValueTables,
}

impl LeaderResponse {
    /// `V_{l,1}^{π_l^*, π_f}(x)`.
    pub fn value(&self, x: usize) -> f64 {
        self.values.v(Player::Leader, 0, x)
    }
}

pub fn best_response_leader(model: &LinearMdp, follower: &FollowerTable) -> Result<LeaderResponse> {
    validate_follower(follower, model.shape())?;
    let (policy, values) = backward(model, Rule::Greedy, Rule::Given(follower));
    Ok(LeaderResponse {
        policy: policy.leader,
        values,
    })
}

/// Follower's best response to a fixed leader policy.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerResponse {
    pub policy: FollowerTable,
    pub values: ValueTables,
}

impl FollowerResponse {
    /// `V̄_{f,1}^{π_l, π_f^*}(x, a)` for every first leader action `a`.
    pub fn bar_values(&self, x: usize) -> Vec<f64> {
        (0..self.values.shape.num_leader_actions)
            .map(|a| self.values.bar_v_f(0, x, a))
            .collect()
    }
}

pub fn best_response_follower(model: &LinearMdp, leader: &LeaderTable) -> Result<FollowerResponse> {
    validate_leader(leader, model.shape())?;
    let (policy, values) = backward(model, Rule::Given(leader), Rule::Greedy);
    Ok(FollowerResponse {
        policy: policy.follower,
        values,
    })
}

/// Largest number of deterministic profiles [`brute_force_enumerate`] visits.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Backward-induction solution by exhaustive search.
///
/// Enumerates every deterministic leader policy; for each, enumerates every
/// deterministic follower policy and keeps the one that is a best response
/// at every `(h, x, a)` under the evaluated profile. The leader policy that
/// is in turn optimal at every `(h, x)` against its follower response is
/// returned. Profiles are scored only through [`evaluate_joint`], never by
/// a greedy recursion.
pub fn brute_force_enumerate(model: &LinearMdp) -> Result<(PolicyTable, ValueTables)> {
    let shape = *model.shape();
    let (ns, na, nb, horizon) = (
        shape.num_states,
        shape.num_leader_actions,
        shape.num_follower_actions,
        shape.horizon,
    );
    let leader_slots = horizon * ns;
    let follower_slots = horizon * ns * na;
    let log_count = leader_slots as f64 * (na as f64).ln() + follower_slots as f64 * (nb as f64).ln();
    if log_count > BRUTE_FORCE_LIMIT.ln() + 1e-9 {
        return Err(Error::Infeasible(format!(
            "{:.3e} deterministic profiles exceed the limit of {BRUTE_FORCE_LIMIT:e}",
            log_count.exp()
        )));
    }
    let leader_count = na.pow(leader_slots as u32);
    let follower_count = nb.pow(follower_slots as u32);

    let mut found: Option<(PolicyTable, ValueTables)> = None;
    for li in 0..leader_count {
        let leader_choice = decode(li, na, leader_slots);
        let leader = point_masses_leader(&leader_choice, &shape);
        let mut response: Option<(PolicyTable, ValueTables)> = None;
        for fi in 0..follower_count {
            let follower_choice = decode(fi, nb, follower_slots);
            let policy = PolicyTable {
                leader: leader.clone(),
                follower: point_masses_follower(&follower_choice, &shape),
            };
            let values = evaluate_joint(model, &policy)?;
            if follower_is_sequentially_rational(&values, &follower_choice) {
                response = Some((policy, values));
                break;
            }
        }
        let (policy, values) = response.ok_or_else(|| {
            Error::InvariantViolation("no deterministic follower best response".into())
        })?;
        if leader_is_sequentially_rational(&values, &leader_choice) {
            if found.is_some() {
                return Err(Error::InvariantViolation(
                    "several leader policies satisfy the optimality conditions".into(),
                ));
            }
            found = Some((policy, values));
        }
    }
    found.ok_or_else(|| Error::InvariantViolation("no subgame-perfect leader policy".into()))
}

/// Mixed-radix digits of `index`, least significant first.
fn decode(mut index: usize, radix: usize, slots: usize) -> Vec<usize> {
    (0..slots)
        .map(|_| {
            let digit = index % radix;
            index /= radix;
            digit
        })
        .collect()
}

fn point_masses_leader(choice: &[usize], shape: &GameShape) -> LeaderTable {
    choice
        .chunks(shape.num_states)
        .map(|per_state| {
            per_state
                .iter()
                .map(|&a| ActionDistribution::point_mass(shape.num_leader_actions, a))
                .collect()
        })
        .collect()
}

fn point_masses_follower(choice: &[usize], shape: &GameShape) -> FollowerTable {
    choice
        .chunks(shape.num_states * shape.num_leader_actions)
        .map(|per_step| {
            per_step
                .chunks(shape.num_leader_actions)
                .map(|per_state| {
                    per_state
                        .iter()
                        .map(|&b| ActionDistribution::point_mass(shape.num_follower_actions, b))
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn follower_is_sequentially_rational(values: &ValueTables, choice: &[usize]) -> bool {
    let s = values.shape;
    let mut slot = 0;
    for h in 0..s.horizon {
        for x in 0..s.num_states {
            for a in 0..s.num_leader_actions {
                let row: Vec<f64> = (0..s.num_follower_actions)
                    .map(|b| values.q(Player::Follower, h, x, a, b))
                    .collect();
                if argmax(&row) != choice[slot] {
                    return false;
                }
                slot += 1;
            }
        }
    }
    true
}

fn leader_is_sequentially_rational(values: &ValueTables, choice: &[usize]) -> bool {
    let s = values.shape;
    let mut slot = 0;
    for h in 0..s.horizon {
        for x in 0..s.num_states {
            let row: Vec<f64> = (0..s.num_leader_actions)
                .map(|a| values.marginal_q(h, x, a))
                .collect();
            if argmax(&row) != choice[slot] {
                return false;
            }
            slot += 1;
        }
    }
    true
}

/// Tabulates the learner's current policies over every `(h, x)`, also
/// returning the per-state evaluations they came from.
pub fn materialize_learner_evaluations<F: FeatureMap>(
    learner: &Learner<F>,
    model: &LinearMdp,
) -> Result<(PolicyTable, Vec<Vec<StateEvaluation>>)> {
    let shape = model.shape();
    let mut leader = Vec::with_capacity(shape.horizon);
    let mut follower = Vec::with_capacity(shape.horizon);
    let mut evaluations = Vec::with_capacity(shape.horizon);
    for h in 0..shape.horizon {
        let per_state = (0..shape.num_states)
            .map(|x| learner.evaluate_state(h, x))
            .collect::<Result<Vec<_>>>()?;
        leader.push(per_state.iter().map(|e| e.leader_policy.clone()).collect());
        follower.push(per_state.iter().map(|e| e.follower_policy.clone()).collect());
        evaluations.push(per_state);
    }
    let table = PolicyTable { leader, follower };
    table.validate(shape)?;
    Ok((table, evaluations))
}

pub fn materialize_learner_policy<F: FeatureMap>(
    learner: &Learner<F>,
    model: &LinearMdp,
) -> Result<PolicyTable> {
    Ok(materialize_learner_evaluations(learner, model)?.0)
}
