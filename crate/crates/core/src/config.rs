//! Flat `key = value` configuration with dotted section names.
//!
//! ```text
//! # comments start with '#'
//! seed = 7
//! train.episodes = 1000
//! ou.sigma = 0.2
//! sampler.amplitude_enabled = true
//! ```
//!
//! Every key has a default; a file overrides the defaults and command-line
//! flags override the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::OracleLimits;
use crate::error::{Error, Result};
use crate::io::OrderFormat;
use crate::train::TrainConfig;

/// Environment variable consulted when no `--config` path is given.
pub const CONFIG_ENV: &str = "CUTPLAN_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub oracle: OracleLimits,
    pub order: Option<PathBuf>,
    pub format: Option<OrderFormat>,
    /// Board length for CSV orders.
    pub board_len: Option<f64>,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    /// Rollouts performed by `evaluate`.
    pub eval_episodes: usize,
    /// Seeds used by `compare` for the random planner.
    pub compare_seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            oracle: OracleLimits::default(),
            order: None,
            format: None,
            board_len: None,
            out: PathBuf::from("out"),
            checkpoint: None,
            eval_episodes: 50,
            compare_seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match value {
        "" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl RunConfig {
    /// Sets one dotted key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "seed" | "train.seed" => t.seed = parse(key, value)?,
            "env.max_steps" => t.env.max_steps = parse(key, value)?,
            "env.lambda_over" => t.env.lambda_over = parse(key, value)?,
            "env.max_plies" => t.env.max_plies = parse_opt(key, value)?,
            "ou.mu" => t.explore.ou.mu = parse(key, value)?,
            "ou.theta" => t.explore.ou.theta = parse(key, value)?,
            "ou.sigma" => t.explore.ou.sigma = parse(key, value)?,
            "ou.dt" => t.explore.ou.dt = parse(key, value)?,
            "ou.enabled" => t.explore.ou_enabled = parse(key, value)?,
            "eps.start" => t.explore.epsilon.start = parse(key, value)?,
            "eps.decay" => t.explore.epsilon.decay = parse(key, value)?,
            "eps.floor" => t.explore.epsilon.floor = parse(key, value)?,
            "eps.enabled" => t.explore.epsilon_enabled = parse(key, value)?,
            "sampler.amplitude_enabled" => t.explore.amplitude_enabled = parse(key, value)?,
            "train.episodes" => t.episodes = parse(key, value)?,
            "train.gamma" => t.gamma = parse(key, value)?,
            "train.lr" => t.adam.lr = parse(key, value)?,
            "train.beta1" => t.adam.beta1 = parse(key, value)?,
            "train.beta2" => t.adam.beta2 = parse(key, value)?,
            "train.adam_eps" => t.adam.eps = parse(key, value)?,
            "train.norm_window" => t.norm_window = parse(key, value)?,
            "train.learn_from_explore" => t.learn_from_explore = parse(key, value)?,
            "oracle.max_states" => self.oracle.max_states = parse(key, value)?,
            "oracle.max_nodes" => self.oracle.max_nodes = parse_opt(key, value)?,
            "oracle.zero_one" => self.oracle.zero_one = parse(key, value)?,
            "io.order" => self.order = parse_opt(key, value)?,
            "io.format" => self.format = parse_opt(key, value)?,
            "io.board_len" => self.board_len = parse_opt(key, value)?,
            "io.out" => self.out = parse(key, value)?,
            "io.checkpoint" => self.checkpoint = parse_opt(key, value)?,
            "eval.episodes" => self.eval_episodes = parse(key, value)?,
            "compare.seeds" => {
                self.compare_seeds = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; errors name the source and line.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: source.to_string(),
                message: format!("line {}: expected `key = value`", i + 1),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: source.to_string(),
                message: format!("line {}: {e}", i + 1),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Defaults overridden by `path`, or by the file named in
    /// `CUTPLAN_CONFIG` when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        if let Some(p) = path.map(Path::to_path_buf).or(from_env) {
            cfg.apply_file(&p)?;
        }
        Ok(cfg)
    }

    /// Every key with its effective value, in a form [`apply_text`] accepts.
    ///
    /// [`apply_text`]: RunConfig::apply_text
    pub fn to_text(&self) -> String {
        fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
        }
        let t = &self.train;
        let e = &t.explore;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", t.seed.to_string());
        kv("env.max_steps", t.env.max_steps.to_string());
        kv("env.lambda_over", t.env.lambda_over.to_string());
        kv("env.max_plies", opt(&t.env.max_plies));
        kv("ou.mu", e.ou.mu.to_string());
        kv("ou.theta", e.ou.theta.to_string());
        kv("ou.sigma", e.ou.sigma.to_string());
        kv("ou.dt", e.ou.dt.to_string());
        kv("ou.enabled", e.ou_enabled.to_string());
        kv("eps.start", e.epsilon.start.to_string());
        kv("eps.decay", e.epsilon.decay.to_string());
        kv("eps.floor", e.epsilon.floor.to_string());
        kv("eps.enabled", e.epsilon_enabled.to_string());
        kv("sampler.amplitude_enabled", e.amplitude_enabled.to_string());
        kv("train.episodes", t.episodes.to_string());
        kv("train.gamma", t.gamma.to_string());
        kv("train.lr", t.adam.lr.to_string());
        kv("train.beta1", t.adam.beta1.to_string());
        kv("train.beta2", t.adam.beta2.to_string());
        kv("train.adam_eps", t.adam.eps.to_string());
        kv("train.norm_window", t.norm_window.to_string());
        kv("train.learn_from_explore", t.learn_from_explore.to_string());
        kv("oracle.max_states", self.oracle.max_states.to_string());
        kv("oracle.max_nodes", opt(&self.oracle.max_nodes));
        kv("oracle.zero_one", self.oracle.zero_one.to_string());
        kv("io.order", opt(&self.order.as_ref().map(|p| p.display())));
        kv(
            "io.format",
            opt(&self.format.map(|f| match f {
                OrderFormat::Json => "json",
                OrderFormat::Csv => "csv",
            })),
        );
        kv("io.board_len", opt(&self.board_len));
        kv("io.out", self.out.display().to_string());
        kv("io.checkpoint", opt(&self.checkpoint.as_ref().map(|p| p.display())));
        kv("eval.episodes", self.eval_episodes.to_string());
        kv(
            "compare.seeds",
            self.compare_seeds
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        s
    }
}
