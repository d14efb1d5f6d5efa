//! The chunked stream simulation.
//!
//! Model `k` is trained at the end of chunk `k` on the rows of chunks `0..=k`
//! and can serve from chunk `k + 1` on, so chunk 0 is training-only and chunk 1
//! has a single arm. Every model is scored on every row up front; the loop then
//! replays those scores batch by batch through the policy.

pub mod data;
pub mod learner;
pub mod log;
pub mod splits;
pub mod synthetic;

use std::ops::Range;

use thiserror::Error;

pub use data::{load_dataset, load_replay_scores, DataError, Dataset, ScoreMatrix};
pub use learner::{train_scorer, LogisticModel, Scorer};
pub use log::{EventLog, EventRecord, LogError, Summary};
pub use splits::{build_cumulative_splits, PoolSplit};
pub use synthetic::SyntheticScenario;

use crate::analysis;
use crate::config::{ExperimentConfig, ScorerSource};
use crate::metrics::{evaluate, MetricError, ScoredBatch};
use crate::policies::{Policy, PolicyContext, PolicyError};
use crate::rewards::RewardBaseline;
use crate::types::{MetricKind, ModelId};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("insufficient data: {rows} rows, at least {needed} needed")]
    InsufficientData { rows: usize, needed: usize },
    #[error("training set of {rows} rows has {positives} positives; both classes are required")]
    DegenerateTrainingSet { rows: usize, positives: usize },
    #[error("replay file has {found} model columns, the chunk plan needs {needed}")]
    ModelCountMismatch { found: usize, needed: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
}

/// Everything a policy run needs besides the policy itself.
#[derive(Debug, Clone)]
pub struct PreparedStream {
    pub scores: ScoreMatrix,
    /// Score of each model on the validation part of its training pool.
    pub validation_scores: Vec<f64>,
    pub chunk_ranges: Vec<Range<usize>>,
}

impl PreparedStream {
    pub fn num_models(&self) -> usize {
        self.validation_scores.len()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: EventLog,
    pub summary: Summary,
    /// One JSON object per served batch with the full policy state.
    pub snapshots: Vec<String>,
}

fn metric_on(
    kind: &MetricKind,
    scores: &[f64],
    labels: &[bool],
) -> Result<Option<f64>, MetricError> {
    match evaluate(kind, &ScoredBatch::new(scores, labels)?) {
        Ok(x) => Ok(Some(x)),
        Err(MetricError::DegenerateBatch) => Ok(None),
        Err(e) => Err(e),
    }
}

fn validation_score(
    kind: &MetricKind,
    scores: &[f64],
    labels: &[bool],
    val: &[usize],
) -> Result<f64, MetricError> {
    let s: Vec<f64> = val.iter().map(|&r| scores[r]).collect();
    let y: Vec<bool> = val.iter().map(|&r| labels[r]).collect();
    Ok(metric_on(kind, &s, &y)?.unwrap_or(0.0))
}

/// Loads or generates the data, trains the models where needed and scores
/// every model on every row. Does not depend on the policy.
pub fn prepare_stream(cfg: &ExperimentConfig) -> Result<PreparedStream, EnvError> {
    let plan = &cfg.chunk_plan;
    let num_models = plan.num_chunks - 1;
    let scores = match &cfg.scorer_source {
        ScorerSource::Replay { path } => {
            let m = load_replay_scores(path)?;
            if m.num_models() < num_models {
                return Err(EnvError::ModelCountMismatch {
                    found: m.num_models(),
                    needed: num_models,
                });
            }
            m
        }
        ScorerSource::Dataset { path, label_column } => {
            let data = load_dataset(path, label_column)?;
            train_all(&data, cfg, &vec![0.0; num_models])?
        }
        ScorerSource::Synthetic { scenario } => {
            let data = scenario.generate(plan.num_chunks, cfg.seed);
            train_all(&data, cfg, &scenario.overfit_schedule)?
        }
    };
    let splits = build_cumulative_splits(scores.len(), plan, cfg.validation_fraction, cfg.seed)?;
    let validation_scores = (0..num_models)
        .map(|k| {
            validation_score(
                &cfg.metric,
                scores.column(ModelId(k)),
                scores.labels(),
                &splits[k].val,
            )
        })
        .collect::<Result<_, _>>()?;
    Ok(PreparedStream {
        chunk_ranges: plan.chunk_ranges(scores.len()),
        scores,
        validation_scores,
    })
}

fn train_all(
    data: &Dataset,
    cfg: &ExperimentConfig,
    overfit: &[f64],
) -> Result<ScoreMatrix, EnvError> {
    let splits = build_cumulative_splits(
        data.len(),
        &cfg.chunk_plan,
        cfg.validation_fraction,
        cfg.seed,
    )?;
    let columns = (0..cfg.chunk_plan.num_chunks - 1)
        .map(|k| {
            let strength = overfit.get(k).copied().unwrap_or(0.0);
            Ok(train_scorer(data, &splits[k].train, strength, k, cfg.seed)?.score_all(data))
        })
        .collect::<Result<Vec<_>, EnvError>>()?;
    Ok(ScoreMatrix::new(
        data.row_ids.clone(),
        data.labels.clone(),
        columns,
    )?)
}

/// Runs the configured policy over a prepared stream.
///
/// A single-class batch carries the previous served metric forward (or the
/// selected model's validation score on the very first batch) and earns
/// `r_neg`; it is skipped by a running A/B test.
pub fn simulate(cfg: &ExperimentConfig, stream: &PreparedStream) -> Result<RunOutput, EnvError> {
    let plan = &cfg.chunk_plan;
    let reward_cfg = cfg.policy_spec.reward;
    let reward_spec = reward_cfg.spec();
    let mut policy = Policy::new(
        &cfg.policy_spec.strategy,
        &reward_spec,
        cfg.seed,
        plan.batch_size,
    );
    let labels = stream.scores.labels();

    let mut log = EventLog::new();
    let mut snapshots = Vec::new();
    let mut previous: Option<f64> = None;
    let mut global_batch = 0u64;

    for (t, range) in stream.chunk_ranges.iter().enumerate().skip(1) {
        let newest = t - 1;
        policy.register_model(ModelId(newest), stream.validation_scores[newest])?;
        let available: Vec<ModelId> = (0..t).map(ModelId).collect();
        let ctx = |g: u64, prev: Option<f64>| PolicyContext::new(available.clone(), g, t, prev);
        policy.begin_chunk(&ctx(global_batch + 1, previous)?)?;

        for batch in plan.batches(t, range) {
            global_batch += 1;
            let ctx = ctx(global_batch, previous)?;
            let selected = policy.select(&ctx);
            let rows = batch.rows.clone();
            let y = &labels[rows.clone()];
            let observed = metric_on(
                &cfg.metric,
                &stream.scores.column(selected)[rows.clone()],
                y,
            )?;

            let (metric, reward) = match observed {
                Some(m) => {
                    let baseline = match reward_cfg.baseline {
                        RewardBaseline::Pipeline => previous,
                        RewardBaseline::PerArm => policy.arms()[selected.0].last_metric,
                    };
                    (m, reward_spec.reward(m, baseline))
                }
                None => (
                    previous.unwrap_or(stream.validation_scores[selected.0]),
                    reward_spec.r_neg,
                ),
            };

            if let (Some((inc, ch)), Some(_)) = (policy.shadow_pair(), observed) {
                let m_inc = metric_on(&cfg.metric, &stream.scores.column(inc)[rows.clone()], y)?;
                let m_ch = metric_on(&cfg.metric, &stream.scores.column(ch)[rows.clone()], y)?;
                if let (Some(a), Some(b)) = (m_inc, m_ch) {
                    policy.observe_shadow(a, b, batch.len() as u64);
                }
            }

            policy.observe(selected, metric, reward);
            previous = Some(metric);
            let digest = policy.snapshot_digest();
            snapshots.push(
                serde_json::json!({
                    "chunk": t,
                    "batch": batch.batch_index,
                    "digest": digest,
                    "policy": policy.snapshot(),
                })
                .to_string(),
            );
            log.push(EventRecord {
                chunk: t,
                batch: batch.batch_index,
                selected,
                metric,
                reward,
                policy_snapshot_digest: Some(digest),
            })
            .expect("batches are generated in order");
        }
        policy.end_chunk();
    }

    let scores = analysis::chunk_scores(&log, plan.eval_start_chunk)?;
    let summary = Summary {
        policy: cfg.policy_spec.strategy.label(),
        overall: scores.overall,
        chunk_scores: scores.chunks.iter().map(|c| c.score).collect(),
        config_digest: cfg.digest(),
        seed: cfg.seed,
    };
    Ok(RunOutput {
        log,
        summary,
        snapshots,
    })
}

/// [`prepare_stream`] followed by [`simulate`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, EnvError> {
    simulate(cfg, &prepare_stream(cfg)?)
}
