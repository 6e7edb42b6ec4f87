//! Experiment configuration and its TOML loader.
//!
//! Config files are TOML. A top-level `include = "base.toml"` (or a list of
//! paths) pulls in other files first, resolved relative to the including
//! file; keys of the including file win. Nested sections may be written as
//! tables or as dotted keys (`a2c.lr = 1e-3`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Coding;
use crate::gridworld::{EnvConfig, MoveStyle, Variant};
use crate::imitation::{DiscSpec, NormalizationMode, RewardStrategy};
use crate::numnet::EncoderSpec;
use crate::policy::{A2CConfig, NetSpec};
use crate::selfexp::EstimatorMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("include cycle through {0}")]
    Cycle(PathBuf),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Scaled version of "stop once the success rate stops improving".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStop {
    /// Evaluations compared against each other.
    pub patience: usize,
    /// Smallest success-rate gain that counts as progress.
    pub min_gain: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop {
            patience: 10,
            min_gain: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub expert_style: MoveStyle,
    pub learner_style: MoveStyle,
    pub strategy: RewardStrategy,
    pub normalization: NormalizationMode,
    pub self_exploration: bool,
    /// Weight of the imitation reward. 0 disables the discriminator.
    pub lambda: f64,
    pub a2c: A2CConfig,
    pub net: NetSpec,
    pub disc: DiscSpec,
    pub estimator: EstimatorMode,
    /// Dataset file. Without one, a planner dataset of `dataset_size`
    /// trajectories is generated from the seed.
    pub dataset: Option<PathBuf>,
    pub dataset_size: usize,
    /// Training iterations `K`, one learner episode each.
    pub iterations: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Self-exploration bits evaluated; 0 is the deployment setting.
    pub eval_taus: Vec<u8>,
    pub early_stop: Option<EarlyStop>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ExperimentConfig {
    /// Full-scale settings: 13×13 maps, full-width networks.
    pub fn full() -> Self {
        ExperimentConfig {
            env: EnvConfig::full(13),
            expert_style: MoveStyle::FourWay,
            learner_style: MoveStyle::FourWay,
            strategy: RewardStrategy::Atd,
            normalization: NormalizationMode::FixedHalfLog,
            self_exploration: true,
            lambda: 1.0,
            a2c: A2CConfig::default(),
            net: NetSpec::default(),
            disc: DiscSpec::default(),
            estimator: EstimatorMode::default(),
            dataset: None,
            dataset_size: 10_000,
            iterations: 1_000_000,
            eval_every: 10_000,
            eval_episodes: 1000,
            eval_taus: vec![0],
            early_stop: None,
            seed: 0,
        }
    }

    /// Desk-scale settings for a single CPU core.
    pub fn desk() -> Self {
        let encoder = EncoderSpec {
            hidden: vec![64],
            embed: 64,
            ..EncoderSpec::default()
        };
        ExperimentConfig {
            env: EnvConfig {
                max_steps: 18,
                ..EnvConfig::full(9)
            },
            a2c: A2CConfig {
                lr: 1e-3,
                ..A2CConfig::default()
            },
            net: NetSpec {
                encoder,
                coding: Coding::Egocentric,
                ..NetSpec::default()
            },
            normalization: NormalizationMode::BatchMean,
            disc: DiscSpec {
                state_hidden: vec![64, 64],
                pair_hidden: 64,
                lr: 3e-3,
            },
            dataset_size: 2000,
            iterations: 150_000,
            eval_every: 5000,
            eval_episodes: 200,
            ..Self::full()
        }
    }

    /// Desk preset on partial maps.
    pub fn desk_partial() -> Self {
        let mut cfg = Self::desk();
        cfg.env = EnvConfig {
            max_steps: 36,
            ..EnvConfig::partial(9)
        };
        cfg.dataset_size = 1000;
        cfg
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::full()),
            "desk" => Some(Self::desk()),
            "desk-partial" => Some(Self::desk_partial()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.env.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.a2c.validate().map_err(ConfigError::Invalid)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be finite and non-negative", self.lambda));
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("eval_every and eval_episodes must be at least 1".into());
        }
        if self.eval_taus.is_empty() || self.eval_taus.iter().any(|&t| t > 1) {
            return bad("eval_taus must list bits 0 and/or 1".into());
        }
        if self.dataset.is_none() && self.dataset_size == 0 {
            return bad("dataset_size must be at least 1".into());
        }
        if let RewardStrategy::Rtgd { min_gap: 0 } = self.strategy {
            return bad("RTGD min_gap must be at least 1".into());
        }
        match self.estimator {
            EstimatorMode::Ema { rate } if !(rate > 0.0 && rate <= 1.0) => {
                bad(format!("EMA rate {rate} outside (0, 1]"))
            }
            EstimatorMode::Window { size: 0 } => bad("window size must be at least 1".into()),
            _ => Ok(()),
        }
    }

    pub fn is_partial(&self) -> bool {
        self.env.variant == Variant::Partial
    }

    /// Parses TOML text on top of `base` (only keys present are replaced).
    pub fn from_toml_str(text: &str, base: &ExperimentConfig) -> Result<Self, ConfigError> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            msg: e.to_string(),
        })?;
        Self::from_table(value, base, Path::new("<string>"))
    }

    /// Loads a config file, resolving `include`s and an optional top-level
    /// `preset = "desk"` that picks the base values.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let table = load_table(path, &mut Vec::new())?;
        let base = match table.get("preset").and_then(|v| v.as_str()) {
            Some(name) => Self::preset(name).ok_or_else(|| ConfigError::Invalid(format!("unknown preset `{name}`")))?,
            None => Self::full(),
        };
        Self::from_table(table, &base, path)
    }

    fn from_table(mut table: toml::Table, base: &ExperimentConfig, path: &Path) -> Result<Self, ConfigError> {
        table.remove("preset");
        table.remove("include");
        let mut merged = toml::Table::try_from(base).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        merge(&mut merged, table);
        let cfg: ExperimentConfig =
            toml::Value::Table(merged)
                .try_into()
                .map_err(|e: toml::de::Error| ConfigError::Parse {
                    path: path.to_path_buf(),
                    msg: e.to_string(),
                })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn load_table(path: &Path, stack: &mut Vec<PathBuf>) -> Result<toml::Table, ConfigError> {
    let canonical = path.canonicalize().map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if stack.contains(&canonical) {
        return Err(ConfigError::Cycle(canonical));
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let includes: Vec<String> = match table.remove("include") {
        None => Vec::new(),
        Some(toml::Value::String(s)) => vec![s],
        Some(toml::Value::Array(xs)) => xs
            .into_iter()
            .map(|v| match v {
                toml::Value::String(s) => Ok(s),
                other => Err(ConfigError::Parse {
                    path: path.to_path_buf(),
                    msg: format!("include entries must be strings, found {other}"),
                }),
            })
            .collect::<Result<_, _>>()?,
        Some(other) => {
            return Err(ConfigError::Parse {
                path: path.to_path_buf(),
                msg: format!("include must be a string or list, found {other}"),
            })
        }
    };
    stack.push(canonical);
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut out = toml::Table::new();
    for inc in includes {
        let mut inner = load_table(&dir.join(inc), stack)?;
        inner.remove("include");
        merge(&mut out, inner);
    }
    stack.pop();
    merge(&mut out, table);
    Ok(out)
}

/// Recursively overlays `top` onto `base`.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
