//! Plain-text model files.
//!
//! ```text
//! [shape]
//! num_states = 2
//! num_leader_actions = 2
//! num_follower_actions = 2
//! horizon = 3
//! feature_dim = 24
//! initial_state = 0
//!
//! [features]        # |S|·|A|·|B| rows of d numbers, triples in (x, a, b) order
//! [mu h=1]          # d rows of |S| numbers, one section per step
//! [theta_l h=1]     # one row of d numbers, one section per step
//! [theta_f h=1]
//! ```
//!
//! Numbers are written as shortest round-trip decimals, so a written model
//! reads back bit-identical.

use crate::config::{format_row, Document, Section};
use crate::{Error, Result};

use super::{FeatureTable, GameShape, LinearMdp};

pub fn model_to_text(model: &LinearMdp) -> String {
    let shape = model.shape();
    let mut doc = Document::default();
    let s = doc.section_mut("shape");
    s.set("num_states", shape.num_states.to_string());
    s.set("num_leader_actions", shape.num_leader_actions.to_string());
    s.set("num_follower_actions", shape.num_follower_actions.to_string());
    s.set("horizon", shape.horizon.to_string());
    s.set("feature_dim", shape.feature_dim.to_string());
    s.set("initial_state", model.initial_state().to_string());

    let mut text = doc.to_text();
    text.push_str("\n[features]\n");
    for j in 0..shape.num_triples() {
        text.push_str(&format_row(model.feature_table().row(j)));
        text.push('\n');
    }
    for h in 0..shape.horizon {
        text.push_str(&format!("\n[mu h={}]\n", h + 1));
        for row in model.mu(h).chunks(shape.num_states) {
            text.push_str(&format_row(row));
            text.push('\n');
        }
        for (name, player) in [("theta_l", crate::Player::Leader), ("theta_f", crate::Player::Follower)] {
            text.push_str(&format!("\n[{name} h={}]\n", h + 1));
            text.push_str(&format_row(model.theta(player, h)));
            text.push('\n');
        }
    }
    text
}

pub fn parse_model(text: &str) -> Result<LinearMdp> {
    let doc = Document::parse(text)?;
    let shape_section = doc
        .section("shape")
        .ok_or_else(|| Error::InvalidModel("missing [shape] section".into()))?;
    let field = |key: &str| -> Result<usize> {
        shape_section
            .get(key)
            .ok_or_else(|| Error::InvalidModel(format!("[shape] is missing `{key}`")))?
            .parse()
    };
    let shape = GameShape {
        num_states: field("num_states")?,
        num_leader_actions: field("num_leader_actions")?,
        num_follower_actions: field("num_follower_actions")?,
        horizon: field("horizon")?,
        feature_dim: field("feature_dim")?,
    };
    shape.validate()?;
    let initial_state = match shape_section.get("initial_state") {
        Some(e) => e.parse()?,
        None => 0,
    };

    let features = doc
        .section("features")
        .ok_or_else(|| Error::InvalidModel("missing [features] section".into()))?;
    let features = FeatureTable::new(
        shape.num_states,
        shape.num_leader_actions,
        shape.num_follower_actions,
        shape.feature_dim,
        features.rows.iter().map(|r| r.values.clone()).collect(),
    )?;

    let d = shape.feature_dim;
    let mut mu = Vec::with_capacity(shape.horizon);
    let mut theta_l = Vec::with_capacity(shape.horizon);
    let mut theta_f = Vec::with_capacity(shape.horizon);
    for h in 1..=shape.horizon {
        let rows = step_rows(&doc, "mu", h, d, shape.num_states)?;
        mu.push(rows.concat());
        theta_l.push(step_rows(&doc, "theta_l", h, 1, d)?.concat());
        theta_f.push(step_rows(&doc, "theta_f", h, 1, d)?.concat());
    }
    LinearMdp::new(shape, features, mu, theta_l, theta_f, initial_state)
}

fn step_rows(doc: &Document, name: &str, h: usize, nrows: usize, ncols: usize) -> Result<Vec<Vec<f64>>> {
    let label = h.to_string();
    let mut matches = doc.sections_named(name).filter(|s| s.attr("h") == Some(label.as_str()));
    let section: &Section = matches
        .next()
        .ok_or_else(|| Error::InvalidModel(format!("missing [{name} h={h}] section")))?;
    if matches.next().is_some() {
        return Err(Error::InvalidModel(format!("duplicate [{name} h={h}] section")));
    }
    if section.rows.len() != nrows {
        return Err(Error::Parse {
            line: section.line,
            msg: format!("[{name} h={h}] has {} rows, expected {nrows}", section.rows.len()),
        });
    }
    section
        .rows
        .iter()
        .map(|r| {
            if r.values.len() == ncols {
                Ok(r.values.clone())
            } else {
                Err(Error::Parse {
                    line: r.line,
                    msg: format!("expected {ncols} numbers, found {}", r.values.len()),
                })
            }
        })
        .collect()
}
