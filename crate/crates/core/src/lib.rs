//! Model-free learning in episodic leader-follower Markov games with linear
//! function approximation.
//!
//! The crate is split along the data flow of an experiment:
//!
//! - [`linalg`]: incremental ridge design matrices (Gram matrix plus a
//!   Sherman-Morrison maintained inverse).
//! - [`env`]: ground-truth linear MDPs, a tabular adapter, a random instance
//!   generator and the model file format.
//! - [`policy`]: numerically stable soft-max distributions and sampling.
//! - [`learner`]: the optimistic least-squares value iteration learner shared
//!   by the leader and the follower.
//! - [`oracle`]: exact finite-state dynamic programming (Stackelberg backward
//!   induction, best responses, joint evaluation, brute force).
//! - [`harness`]: end-to-end experiments, regret accounting, sweeps, CSV
//!   output and the greedy-failure fixture.
//! - [`config`]: the flat sectioned key-value experiment config format.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod env;
pub mod harness;
pub mod learner;
pub mod linalg;
pub mod oracle;
pub mod policy;

mod error;

pub use error::{Error, Result};

/// The two players of the game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Player {
    Leader,
    Follower,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::Leader, Player::Follower];

    pub(crate) fn index(self) -> usize {
        match self {
            Player::Leader => 0,
            Player::Follower => 1,
        }
    }
}

impl std::fmt::Display for Player {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Player::Leader => f.write_str("leader"),
            Player::Follower => f.write_str("follower"),
        }
    }
}
