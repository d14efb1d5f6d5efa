//! Experiment configuration: one JSON document, unknown keys rejected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::environment::SyntheticScenario;
use crate::policies::Strategy;
use crate::rewards::{RewardBaseline, RewardKind, RewardSpec};
use crate::types::{ChunkPlan, MetricKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub chunk_plan: ChunkPlan,
    pub metric: MetricKind,
    pub policy_spec: PolicySpec,
    pub seed: u64,
    pub scorer_source: ScorerSource,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
}

fn default_validation_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub strategy: Strategy,
    #[serde(default)]
    pub reward: RewardConfig,
}

impl From<Strategy> for PolicySpec {
    fn from(strategy: Strategy) -> Self {
        PolicySpec {
            strategy,
            reward: RewardConfig::default(),
        }
    }
}

/// Binary-improvement reward levels and the baseline they compare against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    #[serde(default = "one")]
    pub r_pos: f64,
    #[serde(default)]
    pub r_neg: f64,
    #[serde(default)]
    pub baseline: RewardBaseline,
}

fn one() -> f64 {
    1.0
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            r_pos: 1.0,
            r_neg: 0.0,
            baseline: RewardBaseline::Pipeline,
        }
    }
}

impl RewardConfig {
    pub fn spec(&self) -> RewardSpec {
        RewardSpec {
            r_pos: self.r_pos,
            r_neg: self.r_neg,
            kind: RewardKind::BinaryImprovement,
        }
    }
}

/// Where per-model scores come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerSource {
    /// Precomputed scores, `row_id,label,m0,...,mk`.
    Replay { path: PathBuf },
    /// Feature CSV; the built-in learner trains one model per chunk boundary.
    Dataset { path: PathBuf, label_column: String },
    /// Generated stream with drift and deliberately overfit models.
    Synthetic { scenario: SyntheticScenario },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidField {
    pub name: String,
    pub reason: String,
}

impl fmt::Display for InvalidField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config:\n{}", format_violations(.0))]
    Invalid(Vec<InvalidField>),
}

fn format_violations(v: &[InvalidField]) -> String {
    v.iter()
        .map(|f| format!("  {f}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ConfigError {
    pub fn violations(&self) -> &[InvalidField] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

#[derive(Default)]
struct Violations(Vec<InvalidField>);

impl Violations {
    fn push(&mut self, name: impl Into<String>, reason: impl Into<String>) {
        self.0.push(InvalidField {
            name: name.into(),
            reason: reason.into(),
        });
    }

    fn check(&mut self, ok: bool, name: &str, reason: &str) {
        if !ok {
            self.push(name, reason);
        }
    }
}

fn unit_closed(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

fn unit_open(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

/// Returns the config unchanged iff every constraint holds; otherwise every
/// violated field is reported.
pub fn validate_config(cfg: ExperimentConfig) -> Result<ExperimentConfig, ConfigError> {
    let mut v = Violations::default();
    let plan = &cfg.chunk_plan;
    v.check(
        plan.num_chunks >= 3,
        "chunk_plan.num_chunks",
        "must be >= 3",
    );
    v.check(
        plan.batch_size >= 1,
        "chunk_plan.batch_size",
        "must be >= 1",
    );
    v.check(
        plan.eval_start_chunk >= 1,
        "chunk_plan.eval_start_chunk",
        "must be >= 1",
    );
    v.check(
        plan.num_chunks > plan.eval_start_chunk,
        "chunk_plan.eval_start_chunk",
        "must leave at least one evaluated chunk (num_chunks >= eval_start_chunk + 1)",
    );

    if let MetricKind::BalancedAccuracy { threshold } = cfg.metric {
        v.check(
            unit_closed(threshold),
            "metric.threshold",
            "must be in [0, 1]",
        );
    }

    match cfg.policy_spec.strategy {
        Strategy::Naive | Strategy::Validation => {}
        Strategy::AbTest {
            alpha,
            power,
            delta,
            sigma_window,
        } => {
            v.check(
                unit_open(alpha),
                "policy_spec.strategy.alpha",
                "must be in (0, 1)",
            );
            v.check(
                unit_open(power),
                "policy_spec.strategy.power",
                "must be in (0, 1)",
            );
            v.check(
                delta.is_finite() && delta > 0.0,
                "policy_spec.strategy.delta",
                "must be > 0",
            );
            v.check(
                sigma_window >= 1,
                "policy_spec.strategy.sigma_window",
                "must be >= 1",
            );
        }
        Strategy::EpsilonGreedy { epsilon, decay } => {
            v.check(
                unit_closed(epsilon),
                "policy_spec.strategy.epsilon",
                "must be in [0, 1]",
            );
            v.check(
                decay.is_finite() && decay >= 0.0,
                "policy_spec.strategy.decay",
                "must be >= 0",
            );
        }
        Strategy::Ucb { c } => {
            v.check(
                c.is_finite() && c >= 0.0,
                "policy_spec.strategy.c",
                "must be >= 0",
            );
        }
        Strategy::Thompson { prior } => {
            if let Some((field, reason)) = prior.violation() {
                v.push(format!("policy_spec.strategy.prior.{field}"), reason);
            }
        }
    }

    let reward = &cfg.policy_spec.reward;
    v.check(
        reward.r_pos.is_finite() && reward.r_neg.is_finite() && reward.r_pos > reward.r_neg,
        "policy_spec.reward.r_pos",
        "must be finite and > r_neg",
    );

    v.check(
        unit_open(cfg.validation_fraction),
        "validation_fraction",
        "must be in (0, 1)",
    );

    match &cfg.scorer_source {
        ScorerSource::Replay { path } | ScorerSource::Dataset { path, .. } => {
            v.check(
                !path.as_os_str().is_empty(),
                "scorer_source.path",
                "must not be empty",
            );
        }
        ScorerSource::Synthetic { scenario } => {
            for (name, reason) in scenario.violations(plan.num_chunks) {
                v.push(format!("scorer_source.scenario.{name}"), reason);
            }
            v.check(
                scenario.examples_per_chunk >= plan.batch_size,
                "scorer_source.scenario.examples_per_chunk",
                "every chunk needs at least one full batch",
            );
        }
    }

    if v.0.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(v.0))
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        validate_config(Self::from_json_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_json_pretty() + "\n")
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Rebases relative file paths onto `dir`.
    pub fn with_paths_relative_to(mut self, dir: &Path) -> Self {
        match &mut self.scorer_source {
            ScorerSource::Replay { path } | ScorerSource::Dataset { path, .. }
                if path.is_relative() =>
            {
                *path = dir.join(&*path);
            }
            _ => {}
        }
        self
    }
}
