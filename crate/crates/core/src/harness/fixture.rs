//! Greedy-failure fixture: two one-step games whose Q tables differ by at
//! most `ε`, where a greedy follower moves the leader's marginal value by
//! almost `M` while a soft-max follower moves it by little.
//!
//! ```text
//!            Q_l            Q_f
//! game 1   [[M−ε, 0],    [[1+ε/2, 1−ε/2],
//!           [0,   0]]     [1+ε/2, 1−ε/2]]
//! game 2   [[M,   0],    [[1−ε/2, 1+ε/2],
//!           [0,   0]]     [1,     1−ε/2]]
//! ```
//!
//! Rows are leader actions, columns follower actions.

use crate::policy::{argmax, soft_max};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureReport {
    pub m: f64,
    pub eps: f64,
    pub alpha_f: f64,
    /// `q_l(a)` with a greedy follower, per game.
    pub greedy_q: [Vec<f64>; 2],
    /// `q_l(a)` with a soft-max follower at `alpha_f`, per game.
    pub softmax_q: [Vec<f64>; 2],
    /// `max_a |q_l(a) − q̃_l(a)|` with a greedy follower.
    pub greedy_discrepancy: f64,
    pub softmax_discrepancy: f64,
    /// `ε + 2·α_f·ε·H` with `H = 1`.
    pub bound: f64,
    /// Largest `|Q_l|` entry across both games.
    pub max_abs_q_leader: f64,
}

impl FixtureReport {
    pub fn within_bound(&self) -> bool {
        self.softmax_discrepancy <= self.bound
    }
}

type Table = [[f64; 2]; 2];

fn tables(m: f64, eps: f64) -> [(Table, Table); 2] {
    let half = eps / 2.0;
    [
        (
            [[m - eps, 0.0], [0.0, 0.0]],
            [[1.0 + half, 1.0 - half], [1.0 + half, 1.0 - half]],
        ),
        (
            [[m, 0.0], [0.0, 0.0]],
            [[1.0 - half, 1.0 + half], [1.0, 1.0 - half]],
        ),
    ]
}

fn marginal(q_l: &Table, q_f: &Table, alpha_f: f64) -> Result<Vec<f64>> {
    q_l.iter()
        .zip(q_f)
        .map(|(row_l, row_f)| soft_max(row_f, alpha_f)?.expected_value(row_l))
        .collect()
}

fn sup_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

pub fn greedy_failure_fixture(m: f64, eps: f64, alpha_f: f64) -> Result<FixtureReport> {
    let games = tables(m, eps);
    let greedy = |(q_l, q_f): &(Table, Table)| -> Vec<f64> {
        q_l.iter().zip(q_f).map(|(row_l, row_f)| row_l[argmax(row_f)]).collect()
    };
    let greedy_q = [greedy(&games[0]), greedy(&games[1])];
    let softmax_q = [
        marginal(&games[0].0, &games[0].1, alpha_f)?,
        marginal(&games[1].0, &games[1].1, alpha_f)?,
    ];
    let max_abs_q_leader = games
        .iter()
        .flat_map(|(q_l, _)| q_l.iter().flatten())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(FixtureReport {
        m,
        eps,
        alpha_f,
        greedy_discrepancy: sup_distance(&greedy_q[0], &greedy_q[1]),
        softmax_discrepancy: sup_distance(&softmax_q[0], &softmax_q[1]),
        greedy_q,
        softmax_q,
        bound: eps + 2.0 * alpha_f * eps,
        max_abs_q_leader,
    })
}
