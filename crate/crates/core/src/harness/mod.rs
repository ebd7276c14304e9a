//! Run configuration, seeding, training and evaluation orchestration, and
//! the on-disk outputs of a run.

mod eval;
mod run;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::demonstrator::DemoPolicyConfig;
use crate::env::EnvConfig;
use crate::learner::{AblationFlags, Algorithm, HyperParams, LearnerError};

pub use eval::{collision_unavoidable, evaluate, evaluate_with, EvalEpisode, SuccessReport};
pub use run::{
    export_trajectory_table, generate_demos, load_or_generate_demos, run_training, write_report, CheckpointEval, TrainSummary,
    CONFIG_TOML, EPISODES_CSV, EVALS_CSV, EVAL_JSON, EVAL_TXT, METRICS_CSV, TRAJECTORY_JSONL,
};

/// Environment variable that replaces `output_dir` when set.
pub const OUTPUT_ROOT_ENV: &str = "QCSAC_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("numeric fault: {0}")]
    Numeric(String),
}

impl HarnessError {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io(_) => 3,
            HarnessError::Numeric(_) => 4,
        }
    }
}

impl From<LearnerError> for HarnessError {
    fn from(e: LearnerError) -> Self {
        match e {
            LearnerError::MissingDemos(_) => HarnessError::Config(e.to_string()),
            LearnerError::Io(io) => HarnessError::Io(io),
            other => HarnessError::Numeric(other.to_string()),
        }
    }
}

/// Periodic outputs written during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogConfig {
    /// Write one metrics row every this many gradient steps.
    pub metrics_every: usize,
    /// Checkpoint (and evaluate for the best checkpoint) every this many episodes.
    pub checkpoint_every: usize,
    /// Episodes of the quick evaluation that ranks checkpoints.
    pub checkpoint_eval_episodes: usize,
    /// Log the full trajectory of every this-many-th training episode; 0 disables.
    pub trajectory_every: usize,
}

impl Default for LogConfig {
    fn default() -> Self {
        Self {
            metrics_every: 1,
            checkpoint_every: 100,
            checkpoint_eval_episodes: 20,
            trajectory_every: 100,
        }
    }
}

/// Where generated demonstrations come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoSource {
    /// The imperfect scripted driver.
    #[default]
    Scripted,
    /// Uniformly random actions, for robustness checks against useless data.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoConfig {
    /// Episodes rolled out when generating a dataset.
    pub episodes: usize,
    pub source: DemoSource,
    /// Load this dataset instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub driver: DemoPolicyConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            source: DemoSource::Scripted,
            path: None,
            driver: DemoPolicyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Training budget in episodes.
    pub episodes: usize,
    /// Episodes of the final evaluation.
    pub eval_episodes: usize,
    pub output_dir: PathBuf,
    pub flags: AblationFlags,
    pub log: LogConfig,
    pub demo: DemoConfig,
    pub hyperparams: HyperParams,
    pub env: EnvConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Qcsac,
            seed: 0,
            episodes: 2000,
            eval_episodes: 100,
            output_dir: PathBuf::from("runs"),
            flags: AblationFlags::default(),
            log: LogConfig::default(),
            demo: DemoConfig::default(),
            hyperparams: HyperParams::default(),
            env: EnvConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse and validate. Errors name the offending line where possible.
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate().map_err(|msg| HarnessError::Config(locate(text, &msg)))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.episodes == 0 {
            return Err("episodes must be >= 1".into());
        }
        if self.eval_episodes == 0 {
            return Err("eval_episodes must be >= 1".into());
        }
        if self.log.metrics_every == 0 {
            return Err("log.metrics_every must be >= 1".into());
        }
        if self.log.checkpoint_every == 0 {
            return Err("log.checkpoint_every must be >= 1".into());
        }
        if self.algorithm.uses_demos() && self.demo.path.is_none() && self.demo.episodes == 0 {
            return Err("demo.episodes must be >= 1 when no dataset path is given".into());
        }
        self.demo.driver.validate()?;
        self.hyperparams.validate()?;
        self.env.validate()
    }

    /// Hex digest identifying everything that influences results. The output
    /// location is excluded so that identical runs in different directories
    /// produce identical files.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    /// Directory name of this run under the output root.
    pub fn run_name(&self) -> String {
        let variant = match (self.algorithm, self.flags.use_qnfd, self.flags.use_sddu) {
            (Algorithm::Qcsac, true, true) => "",
            (Algorithm::Qcsac, true, false) => "-qnfd-only",
            (Algorithm::Qcsac, false, true) => "-sddu-only",
            (Algorithm::Qcsac, false, false) => "-none",
            _ => "",
        };
        let demos = match (self.algorithm.uses_demos(), self.demo.source) {
            (true, DemoSource::UniformRandom) => "-random-demos",
            _ => "",
        };
        format!("{}{variant}{demos}-seed{}", self.algorithm.as_str(), self.seed)
    }

    /// Output root after applying the environment override.
    pub fn output_root(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root),
            _ => self.output_dir.clone(),
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_root().join(self.run_name())
    }
}

/// Prefix a validation message with the line of the key it names, when the
/// key appears in the source text.
fn locate(text: &str, msg: &str) -> String {
    let path = msg.split_whitespace().next().unwrap_or("");
    let key = path.rsplit('.').next().unwrap_or(path);
    if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return msg.to_string();
    }
    for (i, line) in text.lines().enumerate() {
        let l = line.trim_start();
        if let Some(rest) = l.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return format!("line {}: {msg}", i + 1);
            }
        }
    }
    msg.to_string()
}

/// Per-component seed derived from the master seed.
pub fn derive_seed(master: u64, component: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(component.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
