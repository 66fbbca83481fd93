//! Weight checkpoints for debugging.
//!
//! One section per `(episode, step)`, appended after each plan:
//!
//! ```text
//! [weights k=12 h=1]
//! w_l = 0.1 -0.25 ...
//! w_f = 0.0 0.5 ...
//! ```
//!
//! `h` is 1-based; values are shortest round-trip decimals.

use std::io::Write;

use crate::config::{format_row, Document, Entry};
use crate::env::FeatureMap;
use crate::{Error, Player, Result};

use super::Learner;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub episode: usize,
    /// 0-based step.
    pub h: usize,
    pub w_leader: Vec<f64>,
    pub w_follower: Vec<f64>,
}

pub fn write_checkpoint<F: FeatureMap, W: Write>(learner: &Learner<F>, out: &mut W) -> Result<()> {
    for h in 0..learner.horizon() {
        writeln!(out, "[weights k={} h={}]", learner.episode(), h + 1)?;
        writeln!(out, "w_l = {}", format_row(learner.weights(Player::Leader, h)))?;
        writeln!(out, "w_f = {}", format_row(learner.weights(Player::Follower, h)))?;
    }
    Ok(())
}

pub fn read_checkpoints(text: &str) -> Result<Vec<CheckpointEntry>> {
    let doc = Document::parse(text)?;
    doc.sections_named("weights")
        .map(|s| {
            let attr = |key: &str| -> Result<usize> {
                s.attr(key)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line: s.line,
                        msg: format!("missing or bad `{key}` attribute"),
                    })
            };
            let vector = |key: &str| -> Result<Vec<f64>> {
                let entry: &Entry = s.get(key).ok_or_else(|| Error::Parse {
                    line: s.line,
                    msg: format!("missing `{key}`"),
                })?;
                entry
                    .value
                    .split_whitespace()
                    .map(|tok| {
                        tok.parse().map_err(|_| Error::Parse {
                            line: entry.line,
                            msg: format!("bad number `{tok}`"),
                        })
                    })
                    .collect()
            };
            let h = attr("h")?;
            if h == 0 {
                return Err(Error::Parse { line: s.line, msg: "steps are 1-based".into() });
            }
            Ok(CheckpointEntry {
                episode: attr("k")?,
                h: h - 1,
                w_leader: vector("w_l")?,
                w_follower: vector("w_f")?,
            })
        })
        .collect()
}
