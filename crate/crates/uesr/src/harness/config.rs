//! Experiment configuration: flat key-value text with `[sections]`.
//!
//! The scheme picks the hyperparameter defaults (learning rates, entropy
//! coefficient, message split); explicit keys override them. Unknown
//! sections or keys are hard errors.
//!
//! ```text
//! [experiment]
//! scheme = m_ues_r          # ia2c | m_r | m_ues | m_ues_r
//! layout = training         # training | goal_shift | shelf_shift
//! seed = 1
//! n_agents = 2
//! total_env_steps = 500000
//! metric_flush_interval = 5000
//! checkpoint_interval = 100000
//! force_zero_ues = false    # diagnostic: publish zeros for the UES part
//!
//! [a2c]
//! learning_rate = 0.0005
//! entropy_coef = 0.05
//! gamma = 0.99
//! n_steps = 5
//! batch_envs = 10
//! reward_bits = 5
//! ues_channels = 5
//!
//! [uem]
//! learning_rate = 0.001
//!
//! [adam]
//! beta1 = 0.9
//! beta2 = 0.99
//! epsilon = 1e-5
//! tau = 0.01
//!
//! [output]
//! metrics_path = runs/ues_r_1.csv
//! checkpoint_path = runs/ues_r_1.ckpt
//! ```

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::agent::{A2cConfig, Scheme};
use crate::env::{LayoutVariant, OBS_LEN};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown config key [{section}] {key}")]
    UnknownKey { section: String, key: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub layout: LayoutVariant,
    pub seed: u64,
    pub n_agents: usize,
    pub total_env_steps: u64,
    pub metric_flush_interval: u64,
    pub checkpoint_interval: u64,
    pub force_zero_ues: bool,
    pub a2c: A2cConfig,
    pub uem_learning_rate: f64,
    /// Reward-trained bit channels per message.
    pub reward_bits: usize,
    /// Unexpectedness channels per message.
    pub ues_channels: usize,
    pub metrics_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults_for(scheme: Scheme) -> Self {
        let (reward_bits, ues_channels) = scheme.default_split();
        ExperimentConfig {
            scheme,
            layout: LayoutVariant::Training,
            seed: 1,
            n_agents: 2,
            total_env_steps: 500_000,
            metric_flush_interval: 5_000,
            checkpoint_interval: 100_000,
            force_zero_ues: false,
            a2c: A2cConfig::defaults_for(scheme),
            uem_learning_rate: 0.001,
            reward_bits,
            ues_channels,
            metrics_path: None,
            checkpoint_path: None,
        }
    }

    pub fn message_len(&self) -> usize {
        self.reward_bits + self.ues_channels
    }

    pub fn policy_input_len(&self) -> usize {
        OBS_LEN + self.n_agents * self.message_len()
    }

    pub fn uem_inbox_len(&self) -> usize {
        (self.n_agents - 1) * self.message_len()
    }

    /// Architecture fingerprint stored in checkpoints. The grid variant is
    /// deliberately absent: transfer loads a checkpoint into a different
    /// layout, but the network wiring must match exactly.
    pub fn fingerprint(&self) -> String {
        format!(
            "v1;scheme={};agents={};obs={};bits={};ues={}",
            self.scheme.name(),
            self.n_agents,
            OBS_LEN,
            self.reward_bits,
            self.ues_channels
        )
    }

    /// Rebuilds the architecture-relevant fields from a checkpoint
    /// fingerprint, with scheme defaults for everything else.
    pub fn from_fingerprint(meta: &str) -> Result<Self, ConfigError> {
        let mut scheme = None;
        let mut agents = None;
        let mut bits = None;
        let mut ues = None;
        for part in meta.split(';') {
            let Some((k, v)) = part.split_once('=') else {
                continue;
            };
            match k {
                "scheme" => {
                    scheme = Some(Scheme::from_name(v).ok_or_else(|| {
                        ConfigError::Invalid(format!("unknown scheme {v} in fingerprint"))
                    })?)
                }
                "agents" => agents = v.parse::<usize>().ok(),
                "bits" => bits = v.parse::<usize>().ok(),
                "ues" => ues = v.parse::<usize>().ok(),
                _ => {}
            }
        }
        let scheme = scheme
            .ok_or_else(|| ConfigError::Invalid(format!("no scheme in fingerprint {meta:?}")))?;
        let mut cfg = ExperimentConfig::defaults_for(scheme);
        if let Some(n) = agents {
            cfg.n_agents = n;
        }
        if let Some(b) = bits {
            cfg.reward_bits = b;
        }
        if let Some(u) = ues {
            cfg.ues_channels = u;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(String, String, String, usize)> = Vec::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let line = match line.find('#') {
                Some(i) => line[..i].trim(),
                None => line,
            };
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(ConfigError::Parse {
                        line: idx + 1,
                        msg: format!("malformed section header {line:?}"),
                    });
                }
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Parse {
                    line: idx + 1,
                    msg: format!("expected key = value, got {line:?}"),
                });
            };
            entries.push((
                section.clone(),
                k.trim().to_string(),
                v.trim().to_string(),
                idx + 1,
            ));
        }

        // The scheme decides the defaults, so find it first.
        let scheme_text = entries
            .iter()
            .find(|(s, k, ..)| s == "experiment" && k == "scheme")
            .map(|(.., v, _)| v.clone())
            .ok_or_else(|| ConfigError::Invalid("missing [experiment] scheme".into()))?;
        let scheme = Scheme::from_name(&scheme_text).ok_or_else(|| {
            ConfigError::Invalid(format!(
                "unknown scheme {scheme_text:?} (expected ia2c | m_r | m_ues | m_ues_r)"
            ))
        })?;
        let mut cfg = ExperimentConfig::defaults_for(scheme);

        for (section, key, value, line) in entries {
            let parse_err = |msg: String| ConfigError::Parse { line, msg };
            match (section.as_str(), key.as_str()) {
                ("experiment", "scheme") => {}
                ("experiment", "layout") => {
                    cfg.layout = LayoutVariant::from_name(&value).ok_or_else(|| {
                        parse_err(format!(
                            "unknown layout {value:?} (expected training | goal_shift | shelf_shift)"
                        ))
                    })?;
                }
                ("experiment", "seed") => cfg.seed = parse_num(&value, line)?,
                ("experiment", "n_agents") => cfg.n_agents = parse_num(&value, line)?,
                ("experiment", "total_env_steps") => {
                    cfg.total_env_steps = parse_num(&value, line)?
                }
                ("experiment", "metric_flush_interval") => {
                    cfg.metric_flush_interval = parse_num(&value, line)?
                }
                ("experiment", "checkpoint_interval") => {
                    cfg.checkpoint_interval = parse_num(&value, line)?
                }
                ("experiment", "force_zero_ues") => {
                    cfg.force_zero_ues = parse_bool(&value, line)?
                }
                ("a2c", "learning_rate") => {
                    cfg.a2c.optimizer.learning_rate = parse_num(&value, line)?
                }
                ("a2c", "entropy_coef") => cfg.a2c.entropy_coef = parse_num(&value, line)?,
                ("a2c", "gamma") => cfg.a2c.gamma = parse_num(&value, line)?,
                ("a2c", "n_steps") => cfg.a2c.n_steps = parse_num(&value, line)?,
                ("a2c", "batch_envs") => cfg.a2c.batch_envs = parse_num(&value, line)?,
                ("a2c", "reward_bits") => cfg.reward_bits = parse_num(&value, line)?,
                ("a2c", "ues_channels") => cfg.ues_channels = parse_num(&value, line)?,
                ("uem", "learning_rate") => cfg.uem_learning_rate = parse_num(&value, line)?,
                ("adam", "beta1") => cfg.a2c.optimizer.adam_beta1 = parse_num(&value, line)?,
                ("adam", "beta2") => cfg.a2c.optimizer.adam_beta2 = parse_num(&value, line)?,
                ("adam", "epsilon") => cfg.a2c.optimizer.adam_epsilon = parse_num(&value, line)?,
                ("adam", "tau") => cfg.a2c.optimizer.soft_update_tau = parse_num(&value, line)?,
                ("output", "metrics_path") => cfg.metrics_path = Some(PathBuf::from(value)),
                ("output", "checkpoint_path") => cfg.checkpoint_path = Some(PathBuf::from(value)),
                _ => return Err(ConfigError::UnknownKey { section, key }),
            }
        }

        cfg.a2c.scheme = cfg.scheme;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.a2c.validate().map_err(ConfigError::Invalid)?;
        if self.n_agents < 1 {
            return Err(ConfigError::Invalid("n_agents must be at least 1".into()));
        }
        if self.uem_learning_rate <= 0.0 {
            return Err(ConfigError::Invalid(
                "uem learning_rate must be positive".into(),
            ));
        }
        if self.metric_flush_interval == 0 {
            return Err(ConfigError::Invalid(
                "metric_flush_interval must be positive".into(),
            ));
        }
        match self.scheme {
            Scheme::Ia2c => {}
            Scheme::Reward => {
                if self.reward_bits == 0 {
                    return Err(ConfigError::Invalid(
                        "scheme m_r needs reward_bits > 0".into(),
                    ));
                }
            }
            Scheme::Ues => {
                if self.ues_channels == 0 || self.reward_bits != 0 {
                    return Err(ConfigError::Invalid(
                        "scheme m_ues needs ues_channels > 0 and reward_bits = 0".into(),
                    ));
                }
            }
            Scheme::UesR => {
                if self.ues_channels == 0 || self.reward_bits == 0 {
                    return Err(ConfigError::Invalid(
                        "scheme m_ues_r needs both reward_bits and ues_channels > 0".into(),
                    ));
                }
            }
        }
        if self.force_zero_ues && !self.scheme.uses_ues() {
            return Err(ConfigError::Invalid(
                "force_zero_ues only applies to ues schemes".into(),
            ));
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize) -> Result<T, ConfigError> {
    value.parse::<T>().map_err(|_| ConfigError::Parse {
        line,
        msg: format!("cannot parse {value:?}"),
    })
}

fn parse_bool(value: &str, line: usize) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::Parse {
            line,
            msg: format!("cannot parse {value:?} as bool"),
        }),
    }
}
