//! Simulation of model-deployment strategies on a chunked data stream.
//!
//! A stream is split into chunks; after each chunk a new model is trained on
//! everything seen so far and joins the registry. Within a chunk, data arrives
//! in batches and a deployment policy picks the model that serves each batch.
//! The crate provides the metrics, rewards and policies, the simulation loop
//! and the analysis of its event logs.

pub mod analysis;
pub mod config;
pub mod environment;
pub mod metrics;
pub mod policies;
pub mod rewards;
pub mod types;

pub use config::{
    validate_config, ConfigError, ExperimentConfig, PolicySpec, RewardConfig, ScorerSource,
};
pub use environment::{
    prepare_stream, run_experiment, simulate, EventLog, EventRecord, RunOutput, Summary,
};
pub use metrics::{balanced_accuracy, pr_auc, roc_auc, MetricError, ScoredBatch};
pub use policies::{Policy, PolicyContext, Strategy};
pub use rewards::{RewardBaseline, RewardSpec};
pub use types::{Batch, ChunkPlan, LabeledExample, MetricKind, ModelId};
