//! Binary classification metrics computed on one batch of scores.
//!
//! PR-AUC is the step-wise average precision over distinct score thresholds,
//! `sum_k (R_k - R_{k-1}) * P_k`, with no interpolation. Tied scores form a
//! single threshold, so the value does not depend on the order of tied rows.
//! ROC-AUC is the Mann-Whitney statistic with ties counted as one half.

use thiserror::Error;

use crate::types::MetricKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("batch is empty")]
    Empty,
    #[error("score at position {index} is {value}, outside [0, 1]")]
    ScoreOutOfRange { index: usize, value: f64 },
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("batch has a single class; the metric is undefined")]
    DegenerateBatch,
}

/// Scores and binary labels of one batch, validated.
#[derive(Debug, Clone, Copy)]
pub struct ScoredBatch<'a> {
    scores: &'a [f64],
    labels: &'a [bool],
}

impl<'a> ScoredBatch<'a> {
    pub fn new(scores: &'a [f64], labels: &'a [bool]) -> Result<Self, MetricError> {
        if scores.len() != labels.len() {
            return Err(MetricError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        if scores.is_empty() {
            return Err(MetricError::Empty);
        }
        if let Some((index, &value)) = scores
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && (0.0..=1.0).contains(*s)))
        {
            return Err(MetricError::ScoreOutOfRange { index, value });
        }
        Ok(ScoredBatch { scores, labels })
    }

    pub fn scores(&self) -> &'a [f64] {
        self.scores
    }

    pub fn labels(&self) -> &'a [bool] {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Indices sorted by descending score; equal scores keep their original order.
    fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        order
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    /// Predicts positive iff `score >= threshold`.
    pub fn at_threshold(sb: &ScoredBatch<'_>, threshold: f64) -> Self {
        let mut c = ConfusionCounts::default();
        for (&s, &y) in sb.scores.iter().zip(sb.labels) {
            match (s >= threshold, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// `(TPR + TNR) / 2` at the given decision threshold.
pub fn balanced_accuracy(sb: &ScoredBatch<'_>, threshold: f64) -> Result<f64, MetricError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(MetricError::InvalidThreshold(threshold));
    }
    let c = ConfusionCounts::at_threshold(sb, threshold);
    let pos = c.tp + c.fn_;
    let neg = c.tn + c.fp;
    if pos == 0 || neg == 0 {
        return Err(MetricError::DegenerateBatch);
    }
    let tpr = c.tp as f64 / pos as f64;
    let tnr = c.tn as f64 / neg as f64;
    Ok((tpr + tnr) / 2.0)
}

/// Area under the precision-recall curve as step-wise average precision.
pub fn pr_auc(sb: &ScoredBatch<'_>) -> Result<f64, MetricError> {
    let total_pos = sb.positives();
    if total_pos == 0 {
        return Err(MetricError::DegenerateBatch);
    }
    let order = sb.ranking();
    let mut ap = 0.0;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_tp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let s = sb.scores[order[i]];
        while i < order.len() && sb.scores[order[i]] == s {
            tp += sb.labels[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        if tp > prev_tp {
            let recall_gain = (tp - prev_tp) as f64 / total_pos as f64;
            ap += recall_gain * (tp as f64 / seen as f64);
            prev_tp = tp;
        }
    }
    Ok(ap)
}

/// Twice the Mann-Whitney U statistic, as an exact integer: each
/// (positive, negative) pair counts 2 when the positive scores higher and 1 on a tie.
pub(crate) fn doubled_mann_whitney(sb: &ScoredBatch<'_>) -> u64 {
    let mut order: Vec<usize> = (0..sb.len()).collect();
    order.sort_by(|&a, &b| sb.scores[a].total_cmp(&sb.scores[b]));
    let mut neg_below = 0u64;
    let mut doubled = 0u64;
    let mut i = 0;
    while i < order.len() {
        let s = sb.scores[order[i]];
        let (mut pos_g, mut neg_g) = (0u64, 0u64);
        while i < order.len() && sb.scores[order[i]] == s {
            if sb.labels[order[i]] {
                pos_g += 1;
            } else {
                neg_g += 1;
            }
            i += 1;
        }
        doubled += 2 * pos_g * neg_below + pos_g * neg_g;
        neg_below += neg_g;
    }
    doubled
}

/// Area under the ROC curve: `P(score_pos > score_neg) + 0.5 * P(tie)`.
pub fn roc_auc(sb: &ScoredBatch<'_>) -> Result<f64, MetricError> {
    let pos = sb.positives() as u64;
    let neg = sb.negatives() as u64;
    if pos == 0 || neg == 0 {
        return Err(MetricError::DegenerateBatch);
    }
    Ok(doubled_mann_whitney(sb) as f64 / (2 * pos * neg) as f64)
}

/// Dispatch on the configured metric.
pub fn evaluate(kind: &MetricKind, sb: &ScoredBatch<'_>) -> Result<f64, MetricError> {
    match *kind {
        MetricKind::BalancedAccuracy { threshold } => balanced_accuracy(sb, threshold),
        MetricKind::PrAuc => pr_auc(sb),
        MetricKind::RocAuc => roc_auc(sb),
    }
}
