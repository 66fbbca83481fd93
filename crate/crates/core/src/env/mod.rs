//! Ground-truth leader-follower linear MDPs.
//!
//! A [`LinearMdp`] is defined by a known feature map `φ(x, a, b) ∈ ℝ^d`, per
//! step measures `μ_h` (a `d × |S|` matrix) and reward vectors `θ_{l,h}`,
//! `θ_{f,h}`:
//!
//! ```text
//! P_h(x' | x, a, b) = ⟨φ(x, a, b), μ_h(x')⟩
//! r_{m,h}(x, a, b)  = ⟨φ(x, a, b), θ_{m,h}⟩
//! ```
//!
//! Steps are 0-based in code (`0..horizon`); the model file format uses
//! 1-based step labels.

mod file;

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::check_index;
use crate::policy::inverse_cdf;
use crate::{Error, Player, Result};

pub use file::{model_to_text, parse_model};

/// Mass tolerance for transition rows.
pub const MASS_TOL: f64 = 1e-9;
/// Entries down to this value are treated as round-off and clamped to zero.
pub const NEGATIVE_TOL: f64 = 1e-12;
/// Slack on the unit-ball and reward-range constraints.
const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GameShape {
    pub num_states: usize,
    pub num_leader_actions: usize,
    pub num_follower_actions: usize,
    pub horizon: usize,
    pub feature_dim: usize,
}

impl GameShape {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("num_states", self.num_states),
            ("num_leader_actions", self.num_leader_actions),
            ("num_follower_actions", self.num_follower_actions),
            ("horizon", self.horizon),
            ("feature_dim", self.feature_dim),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// `|S|·|A|·|B|`.
    pub fn num_triples(&self) -> usize {
        self.num_states * self.num_leader_actions * self.num_follower_actions
    }

    /// Lexicographic index of `(x, a, b)`.
    pub fn triple_index(&self, x: usize, a: usize, b: usize) -> usize {
        (x * self.num_leader_actions + a) * self.num_follower_actions + b
    }

    pub(crate) fn check_triple(&self, x: usize, a: usize, b: usize) -> Result<()> {
        check_index("state", x, self.num_states)?;
        check_index("leader action", a, self.num_leader_actions)?;
        check_index("follower action", b, self.num_follower_actions)
    }

    pub(crate) fn check_step(&self, h: usize) -> Result<()> {
        check_index("step", h, self.horizon)
    }
}

/// A feature map `φ(x, a, b)` as seen by the learner.
///
/// States are opaque indices: the learner only ever asks for features of
/// states it has observed, so implementors need not have a finite state set.
pub trait FeatureMap {
    fn dim(&self) -> usize;
    fn num_leader_actions(&self) -> usize;
    fn num_follower_actions(&self) -> usize;
    fn phi(&self, x: usize, a: usize, b: usize) -> Result<Cow<'_, [f64]>>;
}

impl<T: FeatureMap + ?Sized> FeatureMap for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn num_leader_actions(&self) -> usize {
        (**self).num_leader_actions()
    }

    fn num_follower_actions(&self) -> usize {
        (**self).num_follower_actions()
    }

    fn phi(&self, x: usize, a: usize, b: usize) -> Result<Cow<'_, [f64]>> {
        (**self).phi(x, a, b)
    }
}

/// Tabulated features over a finite state set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    num_states: usize,
    num_leader_actions: usize,
    num_follower_actions: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureTable {
    /// `rows` holds one `dim`-vector per triple in lexicographic `(x, a, b)`
    /// order.
    pub fn new(
        num_states: usize,
        num_leader_actions: usize,
        num_follower_actions: usize,
        dim: usize,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let triples = num_states * num_leader_actions * num_follower_actions;
        if triples == 0 || dim == 0 {
            return Err(Error::InvalidArgument("degenerate feature table".into()));
        }
        if rows.len() != triples {
            return Err(Error::DimensionMismatch {
                expected: triples,
                got: rows.len(),
            });
        }
        let mut data = Vec::with_capacity(triples * dim);
        for (j, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm > 1.0 + NORM_TOL {
                return Err(Error::InvalidModel(format!(
                    "feature row {j} has norm {norm} > 1"
                )));
            }
            data.extend(row);
        }
        Ok(Self {
            num_states,
            num_leader_actions,
            num_follower_actions,
            dim,
            data,
        })
    }

    /// One-hot features over `|S|·|A|·|B|` coordinates.
    pub fn one_hot(num_states: usize, num_leader_actions: usize, num_follower_actions: usize) -> Self {
        let d = num_states * num_leader_actions * num_follower_actions;
        let mut data = vec![0.0; d * d];
        for j in 0..d {
            data[j * d + j] = 1.0;
        }
        Self {
            num_states,
            num_leader_actions,
            num_follower_actions,
            dim: d,
            data,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub(crate) fn row(&self, triple: usize) -> &[f64] {
        &self.data[triple * self.dim..(triple + 1) * self.dim]
    }

    fn triple_index(&self, x: usize, a: usize, b: usize) -> Result<usize> {
        check_index("state", x, self.num_states)?;
        check_index("leader action", a, self.num_leader_actions)?;
        check_index("follower action", b, self.num_follower_actions)?;
        Ok((x * self.num_leader_actions + a) * self.num_follower_actions + b)
    }
}

impl FeatureMap for FeatureTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_leader_actions(&self) -> usize {
        self.num_leader_actions
    }

    fn num_follower_actions(&self) -> usize {
        self.num_follower_actions
    }

    fn phi(&self, x: usize, a: usize, b: usize) -> Result<Cow<'_, [f64]>> {
        let j = self.triple_index(x, a, b)?;
        Ok(Cow::Borrowed(self.row(j)))
    }
}

/// A validated finite linear MDP with tabulated transitions and rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMdp {
    shape: GameShape,
    features: FeatureTable,
    /// per step, `d × |S|` row-major
    mu: Vec<Vec<f64>>,
    theta_l: Vec<Vec<f64>>,
    theta_f: Vec<Vec<f64>>,
    initial_state: usize,
    /// per step, per triple, a distribution over `S`
    transitions: Vec<Vec<f64>>,
    /// `[player][step][triple]`
    rewards: [Vec<Vec<f64>>; 2],
}

impl LinearMdp {
    pub fn new(
        shape: GameShape,
        features: FeatureTable,
        mu: Vec<Vec<f64>>,
        theta_l: Vec<Vec<f64>>,
        theta_f: Vec<Vec<f64>>,
        initial_state: usize,
    ) -> Result<Self> {
        shape.validate()?;
        let (s, d, horizon) = (shape.num_states, shape.feature_dim, shape.horizon);
        if features.num_states != s
            || features.num_leader_actions != shape.num_leader_actions
            || features.num_follower_actions != shape.num_follower_actions
            || features.dim != d
        {
            return Err(Error::InvalidModel("feature table does not match shape".into()));
        }
        check_index("initial state", initial_state, s)?;
        for (name, per_step, len) in [
            ("mu", &mu, d * s),
            ("theta_l", &theta_l, d),
            ("theta_f", &theta_f, d),
        ] {
            if per_step.len() != horizon {
                return Err(Error::InvalidModel(format!(
                    "{name} has {} steps, horizon is {horizon}",
                    per_step.len()
                )));
            }
            if let Some(bad) = per_step.iter().find(|v| v.len() != len) {
                return Err(Error::InvalidModel(format!(
                    "{name} entry has length {}, expected {len}",
                    bad.len()
                )));
            }
        }

        let sqrt_d = (d as f64).sqrt();
        for h in 0..horizon {
            for theta in [&theta_l[h], &theta_f[h]] {
                let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > sqrt_d + NORM_TOL {
                    return Err(Error::InvalidModel(format!(
                        "reward parameter at step {} has norm {norm} > sqrt(d)",
                        h + 1
                    )));
                }
            }
            let tv: f64 = mu[h]
                .chunks(s)
                .map(|row| row.iter().map(|v| v.abs()).sum::<f64>().powi(2))
                .sum::<f64>()
                .sqrt();
            if tv > sqrt_d + MASS_TOL {
                return Err(Error::InvalidModel(format!(
                    "measure at step {} has total variation {tv} > sqrt(d)",
                    h + 1
                )));
            }
        }

        let triples = shape.num_triples();
        let mut transitions = Vec::with_capacity(horizon);
        let mut rewards = [Vec::with_capacity(horizon), Vec::with_capacity(horizon)];
        for h in 0..horizon {
            let mut table = Vec::with_capacity(triples * s);
            let mut r_l = Vec::with_capacity(triples);
            let mut r_f = Vec::with_capacity(triples);
            for j in 0..triples {
                let phi = features.row(j);
                let mut row = vec![0.0; s];
                for (k, &p) in phi.iter().enumerate() {
                    if p != 0.0 {
                        for (dst, m) in row.iter_mut().zip(&mu[h][k * s..(k + 1) * s]) {
                            *dst += p * m;
                        }
                    }
                }
                normalize_row(&mut row).map_err(|msg| {
                    Error::InvalidModel(format!("step {} triple {j}: {msg}", h + 1))
                })?;
                table.extend(row);

                for (theta, out) in [(&theta_l[h], &mut r_l), (&theta_f[h], &mut r_f)] {
                    let r: f64 = phi.iter().zip(theta.iter()).map(|(p, t)| p * t).sum();
                    if !r.is_finite() || r.abs() > 1.0 + NORM_TOL {
                        return Err(Error::InvalidModel(format!(
                            "step {} triple {j}: reward {r} outside [-1, 1]",
                            h + 1
                        )));
                    }
                    out.push(r);
                }
            }
            transitions.push(table);
            rewards[0].push(r_l);
            rewards[1].push(r_f);
        }

        Ok(Self {
            shape,
            features,
            mu,
            theta_l,
            theta_f,
            initial_state,
            transitions,
            rewards,
        })
    }

    pub fn shape(&self) -> &GameShape {
        &self.shape
    }

    pub fn feature_table(&self) -> &FeatureTable {
        &self.features
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// `d × |S|` row-major measure matrix of step `h`.
    pub fn mu(&self, h: usize) -> &[f64] {
        &self.mu[h]
    }

    pub fn theta(&self, player: Player, h: usize) -> &[f64] {
        match player {
            Player::Leader => &self.theta_l[h],
            Player::Follower => &self.theta_f[h],
        }
    }

    pub fn features(&self, x: usize, a: usize, b: usize) -> Result<&[f64]> {
        self.shape.check_triple(x, a, b)?;
        Ok(self.features.row(self.shape.triple_index(x, a, b)))
    }

    pub fn transition_distribution(&self, h: usize, x: usize, a: usize, b: usize) -> Result<&[f64]> {
        self.shape.check_step(h)?;
        self.shape.check_triple(x, a, b)?;
        Ok(self.transition_row(h, self.shape.triple_index(x, a, b)))
    }

    pub fn transition_sample<R: Rng + ?Sized>(
        &self,
        h: usize,
        x: usize,
        a: usize,
        b: usize,
        rng: &mut R,
    ) -> Result<usize> {
        let row = self.transition_distribution(h, x, a, b)?;
        Ok(inverse_cdf(row, rng.random()))
    }

    pub fn reward(&self, player: Player, h: usize, x: usize, a: usize, b: usize) -> Result<f64> {
        self.shape.check_step(h)?;
        self.shape.check_triple(x, a, b)?;
        Ok(self.reward_at(player, h, self.shape.triple_index(x, a, b)))
    }

    pub(crate) fn transition_row(&self, h: usize, triple: usize) -> &[f64] {
        let s = self.shape.num_states;
        &self.transitions[h][triple * s..(triple + 1) * s]
    }

    pub(crate) fn reward_at(&self, player: Player, h: usize, triple: usize) -> f64 {
        self.rewards[player.index()][h][triple]
    }
}

/// Clamps round-off negatives and renormalizes a row within [`MASS_TOL`].
fn normalize_row(row: &mut [f64]) -> std::result::Result<(), String> {
    for v in row.iter_mut() {
        if !v.is_finite() || *v < -NEGATIVE_TOL {
            return Err(format!("transition probability {v} is negative"));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(format!("transition row sums to {total}"));
    }
    if total != 1.0 {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(())
}

/// A finite game given directly by its tables.
///
/// `transitions[h][j]` is the successor distribution of the `j`-th triple in
/// lexicographic `(x, a, b)` order; `rewards_*[h][j]` its reward.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularGame {
    pub num_states: usize,
    pub num_leader_actions: usize,
    pub num_follower_actions: usize,
    pub horizon: usize,
    pub initial_state: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards_l: Vec<Vec<f64>>,
    pub rewards_f: Vec<Vec<f64>>,
}

impl TabularGame {
    /// Random instance: Dirichlet(1, …, 1) transition rows and rewards uniform
    /// in `[-1, 1]`, generated step by step in lexicographic triple order.
    pub fn random(
        num_states: usize,
        num_leader_actions: usize,
        num_follower_actions: usize,
        horizon: usize,
        seed: u64,
    ) -> Result<Self> {
        let shape = GameShape {
            num_states,
            num_leader_actions,
            num_follower_actions,
            horizon,
            feature_dim: 1,
        };
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let triples = shape.num_triples();
        let mut transitions = Vec::with_capacity(horizon);
        let mut rewards_l = Vec::with_capacity(horizon);
        let mut rewards_f = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            transitions.push((0..triples).map(|_| dirichlet_ones(&mut rng, num_states)).collect());
            rewards_l.push((0..triples).map(|_| rng.random_range(-1.0..=1.0)).collect());
            rewards_f.push((0..triples).map(|_| rng.random_range(-1.0..=1.0)).collect());
        }
        Ok(Self {
            num_states,
            num_leader_actions,
            num_follower_actions,
            horizon,
            initial_state: 0,
            transitions,
            rewards_l,
            rewards_f,
        })
    }
}

/// Embeds a tabular game as a linear MDP with one-hot features.
pub fn tabular_to_linear(game: &TabularGame) -> Result<LinearMdp> {
    let shape = GameShape {
        num_states: game.num_states,
        num_leader_actions: game.num_leader_actions,
        num_follower_actions: game.num_follower_actions,
        horizon: game.horizon,
        feature_dim: game.num_states * game.num_leader_actions * game.num_follower_actions,
    };
    shape.validate()?;
    let triples = shape.num_triples();
    let s = shape.num_states;
    for (name, table) in [
        ("rewards_l", &game.rewards_l),
        ("rewards_f", &game.rewards_f),
    ] {
        if table.len() != shape.horizon || table.iter().any(|r| r.len() != triples) {
            return Err(Error::InvalidModel(format!("{name} does not match the shape")));
        }
        if let Some(r) = table.iter().flatten().find(|r| !(r.abs() <= 1.0)) {
            return Err(Error::InvalidModel(format!("{name} entry {r} outside [-1, 1]")));
        }
    }
    if game.transitions.len() != shape.horizon {
        return Err(Error::InvalidModel("transitions do not match the horizon".into()));
    }
    let mut mu = Vec::with_capacity(shape.horizon);
    for (h, rows) in game.transitions.iter().enumerate() {
        if rows.len() != triples {
            return Err(Error::InvalidModel(format!(
                "step {} has {} transition rows, expected {triples}",
                h + 1,
                rows.len()
            )));
        }
        let mut m = Vec::with_capacity(triples * s);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != s {
                return Err(Error::InvalidModel(format!(
                    "step {} row {j} has length {}",
                    h + 1,
                    row.len()
                )));
            }
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > MASS_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "step {} row {j} is not a distribution",
                    h + 1
                )));
            }
            m.extend_from_slice(row);
        }
        mu.push(m);
    }
    LinearMdp::new(
        shape,
        FeatureTable::one_hot(shape.num_states, shape.num_leader_actions, shape.num_follower_actions),
        mu,
        game.rewards_l.clone(),
        game.rewards_f.clone(),
        game.initial_state,
    )
}

/// Random valid linear MDP.
///
/// Features are uniform on the probability simplex of `ℝ^d`, each row of
/// `μ_h` is a Dirichlet(1, …, 1) distribution over states and `θ_{m,h}` is
/// uniform on `[-1, 1]^d`. Every `P_h(·|x, a, b)` is then a mixture of the
/// rows of `μ_h` and every reward a convex combination of entries of `θ`.
/// Draw order: features (lexicographic triples), then for each step the
/// rows of `μ_h`, `θ_{l,h}`, `θ_{f,h}`.
pub fn random_linear_mdp(shape: GameShape, seed: u64) -> Result<LinearMdp> {
    shape.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = shape.feature_dim;
    let rows = (0..shape.num_triples())
        .map(|_| dirichlet_ones(&mut rng, d))
        .collect();
    let features = FeatureTable::new(
        shape.num_states,
        shape.num_leader_actions,
        shape.num_follower_actions,
        d,
        rows,
    )?;
    let mut mu = Vec::with_capacity(shape.horizon);
    let mut theta_l = Vec::with_capacity(shape.horizon);
    let mut theta_f = Vec::with_capacity(shape.horizon);
    for _ in 0..shape.horizon {
        mu.push((0..d).flat_map(|_| dirichlet_ones(&mut rng, shape.num_states)).collect());
        theta_l.push((0..d).map(|_| rng.random_range(-1.0..=1.0)).collect());
        theta_f.push((0..d).map(|_| rng.random_range(-1.0..=1.0)).collect());
    }
    LinearMdp::new(shape, features, mu, theta_l, theta_f, 0)
}

fn dirichlet_ones(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = v.iter().sum();
    for x in &mut v {
        *x /= total;
    }
    v
}
