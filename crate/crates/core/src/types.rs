//! Shared domain values: model identities, stream partitions and metric choice.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Identity of a trained candidate model.
///
/// Index `k` is the model trained at the end of chunk `k` on chunks `0..=k`,
/// so it first becomes deployable in chunk `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelId(pub usize);

impl ModelId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for ModelId {
    fn from(index: usize) -> Self {
        ModelId(index)
    }
}

/// One row of the stream. Features never live here; they stay behind the scorers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledExample {
    pub row_id: u64,
    pub label: bool,
}

/// A contiguous slice of the stream served by a single model decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub chunk_index: usize,
    pub batch_index: usize,
    /// Positions into the stream (row order of the score matrix).
    pub rows: Range<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// How the stream is cut into chunks (retraining cadence) and batches (decision cadence).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkPlan {
    pub num_chunks: usize,
    pub batch_size: usize,
    #[serde(default = "default_eval_start_chunk")]
    pub eval_start_chunk: usize,
}

pub(crate) fn default_eval_start_chunk() -> usize {
    2
}

impl Default for ChunkPlan {
    fn default() -> Self {
        ChunkPlan {
            num_chunks: 8,
            batch_size: 300,
            eval_start_chunk: default_eval_start_chunk(),
        }
    }
}

impl ChunkPlan {
    /// Row range of every chunk for a stream of `total_rows`. Chunks have equal
    /// length `total_rows / num_chunks`; trailing remainder rows are dropped.
    pub fn chunk_ranges(&self, total_rows: usize) -> Vec<Range<usize>> {
        let len = total_rows / self.num_chunks;
        (0..self.num_chunks)
            .map(|t| t * len..(t + 1) * len)
            .collect()
    }

    /// Full batches of one chunk. A partial trailing batch is not served.
    pub fn batches(&self, chunk_index: usize, chunk: &Range<usize>) -> Vec<Batch> {
        let count = chunk.len() / self.batch_size;
        (0..count)
            .map(|b| {
                let start = chunk.start + b * self.batch_size;
                Batch {
                    chunk_index,
                    batch_index: b,
                    rows: start..start + self.batch_size,
                }
            })
            .collect()
    }
}

/// The per-batch evaluation metric f(.).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", from = "StrictMetricKind")]
pub enum MetricKind {
    BalancedAccuracy {
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    PrAuc,
    RocAuc,
}

fn default_threshold() -> f64 {
    0.5
}

// Serde ignores extra keys next to a unit variant's tag, so parsing goes
// through empty struct variants, which do reject them.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum StrictMetricKind {
    BalancedAccuracy {
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    PrAuc {},
    RocAuc {},
}

impl From<StrictMetricKind> for MetricKind {
    fn from(raw: StrictMetricKind) -> Self {
        match raw {
            StrictMetricKind::BalancedAccuracy { threshold } => {
                MetricKind::BalancedAccuracy { threshold }
            }
            StrictMetricKind::PrAuc {} => MetricKind::PrAuc,
            StrictMetricKind::RocAuc {} => MetricKind::RocAuc,
        }
    }
}

impl MetricKind {
    pub fn balanced_accuracy() -> Self {
        MetricKind::BalancedAccuracy {
            threshold: default_threshold(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::BalancedAccuracy { .. } => "balanced_accuracy",
            MetricKind::PrAuc => "pr_auc",
            MetricKind::RocAuc => "roc_auc",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_ranges_drop_remainder() {
        let plan = ChunkPlan {
            num_chunks: 3,
            batch_size: 2,
            eval_start_chunk: 2,
        };
        assert_eq!(plan.chunk_ranges(10), vec![0..3, 3..6, 6..9]);
    }

    #[test]
    fn batches_are_full_only() {
        let plan = ChunkPlan {
            num_chunks: 3,
            batch_size: 2,
            eval_start_chunk: 2,
        };
        let batches = plan.batches(1, &(5..10));
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[1].rows, 7..9);
        assert_eq!(batches[1].chunk_index, 1);
    }

    #[test]
    fn metric_kind_json_shape() {
        let m: MetricKind = serde_json::from_str(r#"{"kind":"balanced_accuracy"}"#).unwrap();
        assert_eq!(m, MetricKind::balanced_accuracy());
        let m: MetricKind = serde_json::from_str(r#"{"kind":"pr_auc"}"#).unwrap();
        assert_eq!(m, MetricKind::PrAuc);
        assert!(serde_json::from_str::<MetricKind>(r#"{"kind":"pr_auc","x":1}"#).is_err());
    }
}
