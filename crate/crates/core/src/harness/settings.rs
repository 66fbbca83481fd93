//! Experiment configuration and its text form.
//!
//! ```text
//! [model]
//! source = tabular          # tabular | linear | file
//! seed = 2024               # generator seed (tabular, linear)
//! path = reference.model    # model file (file); relative to the config file
//!
//! [shape]                   # generated models only
//! num_states = 2
//! num_leader_actions = 2
//! num_follower_actions = 2
//! horizon = 3
//! feature_dim = 4           # linear only; tabular uses |S|·|A|·|B|
//! initial_distribution = 0.5, 0.5   # optional; default point mass on state 0
//!
//! [learner]
//! episodes = 2000
//! mode = softmax            # softmax | greedy | uniform
//! c1 = 1
//! failure_prob = 0.1
//! lambda = 1
//! beta = 2.5                # optional, replaces c1·d·H·√ι
//! alpha_l = 10              # optional, number or inf
//! alpha_f = 10
//!
//! [run]
//! seed = 7
//! cadence = 1
//! output = results/run.csv  # optional
//! checkpoint = weights.txt  # optional
//! check_invariants = true
//! wall_clock = false
//! ```

use std::path::{Path, PathBuf};

use crate::config::{parse_list, parse_real, Document, Entry, Section};
use crate::env::{parse_model, random_linear_mdp, tabular_to_linear, GameShape, LinearMdp, TabularGame};
use crate::learner::{default_hyperparams, HyperParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    /// Random tabular game embedded with one-hot features.
    Tabular { seed: u64 },
    /// Random simplex-feature linear MDP.
    Linear { seed: u64 },
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    SoftMax,
    /// Both temperatures forced to infinity.
    Greedy,
    /// Both players act uniformly at random; no learning.
    Uniform,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::SoftMax => "softmax",
            Mode::Greedy => "greedy",
            Mode::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(Mode::SoftMax),
            "greedy" => Ok(Mode::Greedy),
            "uniform" => Ok(Mode::Uniform),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    /// Used for generated models; a model file carries its own shape.
    pub shape: GameShape,
    pub initial_distribution: Option<Vec<f64>>,
    pub episodes: usize,
    pub mode: Mode,
    pub c1: f64,
    pub failure_prob: f64,
    pub lambda: f64,
    pub beta: Option<f64>,
    pub alpha_l: Option<f64>,
    pub alpha_f: Option<f64>,
    pub seed: u64,
    /// Regret is evaluated every `cadence` episodes and held in between.
    pub cadence: usize,
    pub output: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub check_invariants: bool,
    /// Record per-episode wall-clock time; off keeps CSVs reproducible.
    pub wall_clock: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSource::Tabular { seed: 0 },
            shape: GameShape {
                num_states: 2,
                num_leader_actions: 2,
                num_follower_actions: 2,
                horizon: 3,
                feature_dim: 8,
            },
            initial_distribution: None,
            episodes: 100,
            mode: Mode::SoftMax,
            c1: 1.0,
            failure_prob: 0.1,
            lambda: 1.0,
            beta: None,
            alpha_l: None,
            alpha_f: None,
            seed: 0,
            cadence: 1,
            output: None,
            checkpoint: None,
            check_invariants: true,
            wall_clock: false,
        }
    }
}

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("model", &["source", "seed", "path"]),
    (
        "shape",
        &[
            "num_states",
            "num_leader_actions",
            "num_follower_actions",
            "horizon",
            "feature_dim",
            "initial_distribution",
        ],
    ),
    (
        "learner",
        &["episodes", "mode", "c1", "failure_prob", "lambda", "beta", "alpha_l", "alpha_f"],
    ),
    (
        "run",
        &["seed", "cadence", "output", "checkpoint", "check_invariants", "wall_clock"],
    ),
    ("sweep", &["alpha_l", "alpha_f", "c1", "seeds", "parallel"]),
];

fn check_known(doc: &Document) -> Result<()> {
    for s in &doc.sections {
        let keys = KNOWN_KEYS
            .iter()
            .find(|(name, _)| *name == s.name)
            .map(|(_, keys)| *keys)
            .ok_or_else(|| Error::Parse {
                line: s.line,
                msg: format!("unknown section [{}]", s.name),
            })?;
        if let Some(e) = s.entries.iter().find(|e| !keys.contains(&e.key.as_str())) {
            return Err(Error::Parse {
                line: e.line,
                msg: format!("unknown key `{}` in [{}]", e.key, s.name),
            });
        }
        if let Some(r) = s.rows.first() {
            return Err(Error::Parse {
                line: r.line,
                msg: "unexpected bare row in a config file".into(),
            });
        }
    }
    Ok(())
}

fn get<'a>(doc: &'a Document, section: &str, key: &str) -> Option<&'a Entry> {
    doc.section(section).and_then(|s: &Section| s.get(key))
}

fn parse_bool(e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse {
            line: e.line,
            msg: format!("`{}` is not a boolean", e.value),
        }),
    }
}

impl ExperimentConfig {
    /// Reads a config; relative paths resolve against `base_dir`.
    pub fn from_document(doc: &Document, base_dir: &Path) -> Result<Self> {
        check_known(doc)?;
        let mut cfg = Self::default();
        let resolve = |p: &str| {
            let path = PathBuf::from(p);
            if path.is_absolute() {
                path
            } else {
                base_dir.join(path)
            }
        };

        let source = get(doc, "model", "source").map(|e| e.value.as_str()).unwrap_or("tabular");
        let model_seed = match get(doc, "model", "seed") {
            Some(e) => e.parse()?,
            None => 0,
        };
        cfg.model = match source {
            "tabular" => ModelSource::Tabular { seed: model_seed },
            "linear" => ModelSource::Linear { seed: model_seed },
            "file" => {
                let path = get(doc, "model", "path").ok_or_else(|| {
                    Error::InvalidArgument("model source `file` needs model.path".into())
                })?;
                ModelSource::File(resolve(&path.value))
            }
            other => return Err(Error::InvalidArgument(format!("unknown model source `{other}`"))),
        };

        let shape = &mut cfg.shape;
        for (key, slot) in [
            ("num_states", &mut shape.num_states),
            ("num_leader_actions", &mut shape.num_leader_actions),
            ("num_follower_actions", &mut shape.num_follower_actions),
            ("horizon", &mut shape.horizon),
            ("feature_dim", &mut shape.feature_dim),
        ] {
            if let Some(e) = get(doc, "shape", key) {
                *slot = e.parse()?;
            }
        }
        if let ModelSource::Tabular { .. } = cfg.model {
            cfg.shape.feature_dim = cfg.shape.num_triples();
        }
        if let Some(e) = get(doc, "shape", "initial_distribution") {
            cfg.initial_distribution = Some(parse_list(e, parse_real)?);
        }

        if let Some(e) = get(doc, "learner", "episodes") {
            cfg.episodes = e.parse()?;
        }
        if let Some(e) = get(doc, "learner", "mode") {
            cfg.mode = e.value.parse()?;
        }
        for (key, slot) in [
            ("c1", &mut cfg.c1),
            ("failure_prob", &mut cfg.failure_prob),
            ("lambda", &mut cfg.lambda),
        ] {
            if let Some(e) = get(doc, "learner", key) {
                *slot = parse_real(e)?;
            }
        }
        for (key, slot) in [
            ("beta", &mut cfg.beta),
            ("alpha_l", &mut cfg.alpha_l),
            ("alpha_f", &mut cfg.alpha_f),
        ] {
            if let Some(e) = get(doc, "learner", key) {
                *slot = Some(parse_real(e)?);
            }
        }

        if let Some(e) = get(doc, "run", "seed") {
            cfg.seed = e.parse()?;
        }
        if let Some(e) = get(doc, "run", "cadence") {
            cfg.cadence = e.parse()?;
        }
        cfg.output = get(doc, "run", "output").map(|e| resolve(&e.value));
        cfg.checkpoint = get(doc, "run", "checkpoint").map(|e| resolve(&e.value));
        if let Some(e) = get(doc, "run", "check_invariants") {
            cfg.check_invariants = parse_bool(e)?;
        }
        if let Some(e) = get(doc, "run", "wall_clock") {
            cfg.wall_clock = parse_bool(e)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        Self::from_document(&Document::parse(text)?, base_dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::InvalidArgument("episodes must be at least 1".into()));
        }
        if self.cadence == 0 {
            return Err(Error::InvalidArgument("cadence must be at least 1".into()));
        }
        if !matches!(self.model, ModelSource::File(_)) {
            self.shape.validate()?;
        }
        if let Some(dist) = &self.initial_distribution {
            let total: f64 = dist.iter().sum();
            if dist.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(
                    "initial_distribution must be a probability vector".into(),
                ));
            }
        }
        Ok(())
    }

    /// Effective configuration, with every field spelled out.
    pub fn to_document(&self) -> Document {
        let mut doc = Document::default();
        let m = doc.section_mut("model");
        match &self.model {
            ModelSource::Tabular { seed } => {
                m.set("source", "tabular");
                m.set("seed", seed.to_string());
            }
            ModelSource::Linear { seed } => {
                m.set("source", "linear");
                m.set("seed", seed.to_string());
            }
            ModelSource::File(path) => {
                m.set("source", "file");
                m.set("path", path.display().to_string());
            }
        }
        let s = doc.section_mut("shape");
        s.set("num_states", self.shape.num_states.to_string());
        s.set("num_leader_actions", self.shape.num_leader_actions.to_string());
        s.set("num_follower_actions", self.shape.num_follower_actions.to_string());
        s.set("horizon", self.shape.horizon.to_string());
        s.set("feature_dim", self.shape.feature_dim.to_string());
        if let Some(dist) = &self.initial_distribution {
            s.set("initial_distribution", join(dist));
        }
        let l = doc.section_mut("learner");
        l.set("episodes", self.episodes.to_string());
        l.set("mode", self.mode.as_str());
        l.set("c1", format!("{:?}", self.c1));
        l.set("failure_prob", format!("{:?}", self.failure_prob));
        l.set("lambda", format!("{:?}", self.lambda));
        for (key, value) in [("beta", self.beta), ("alpha_l", self.alpha_l), ("alpha_f", self.alpha_f)] {
            if let Some(v) = value {
                l.set(key, real_text(v));
            }
        }
        let r = doc.section_mut("run");
        r.set("seed", self.seed.to_string());
        r.set("cadence", self.cadence.to_string());
        if let Some(p) = &self.output {
            r.set("output", p.display().to_string());
        }
        if let Some(p) = &self.checkpoint {
            r.set("checkpoint", p.display().to_string());
        }
        r.set("check_invariants", self.check_invariants.to_string());
        r.set("wall_clock", self.wall_clock.to_string());
        doc
    }

    pub fn load_model(&self) -> Result<LinearMdp> {
        match &self.model {
            ModelSource::Tabular { seed } => {
                let s = &self.shape;
                let game = TabularGame::random(
                    s.num_states,
                    s.num_leader_actions,
                    s.num_follower_actions,
                    s.horizon,
                    *seed,
                )?;
                tabular_to_linear(&game)
            }
            ModelSource::Linear { seed } => random_linear_mdp(self.shape, *seed),
            ModelSource::File(path) => parse_model(&std::fs::read_to_string(path)?),
        }
    }

    /// Default hyperparameters for `model`, then explicit overrides, then the mode.
    pub fn hyperparams(&self, model: &LinearMdp) -> Result<HyperParams> {
        let s = model.shape();
        let mut p = default_hyperparams(
            s.feature_dim,
            s.num_leader_actions,
            s.num_follower_actions,
            s.horizon,
            self.episodes,
            self.failure_prob,
            self.c1,
        )?;
        p.lambda = self.lambda;
        if let Some(beta) = self.beta {
            p.beta = beta;
        }
        if let Some(alpha) = self.alpha_l {
            p.alpha_l = alpha;
        }
        if let Some(alpha) = self.alpha_f {
            p.alpha_f = alpha;
        }
        if self.mode == Mode::Greedy {
            p.alpha_l = f64::INFINITY;
            p.alpha_f = f64::INFINITY;
        }
        p.validate()?;
        Ok(p)
    }
}

pub(crate) fn real_text(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v:?}")
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| real_text(*v)).collect::<Vec<_>>().join(", ")
}
