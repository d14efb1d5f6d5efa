//! Pure functions from an event log to tables, traces and transition matrices.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::EventLog;
use crate::types::ModelId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("no records in chunks >= {eval_start}")]
    NoEvaluatedChunks { eval_start: usize },
    #[error("chunk {chunk} has {batches} batches; transitions need at least 2")]
    ChunkTooShort { chunk: usize, batches: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkScore {
    pub chunk: usize,
    pub score: f64,
    pub batches: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkScores {
    pub chunks: Vec<ChunkScore>,
    /// Unweighted mean of the chunk means.
    pub overall: f64,
}

/// Mean metric of every chunk from `eval_start` on.
pub fn chunk_scores(log: &EventLog, eval_start: usize) -> Result<ChunkScores, AnalysisError> {
    let chunks: Vec<ChunkScore> = log
        .chunks()
        .into_iter()
        .filter(|&c| c >= eval_start)
        .map(|chunk| {
            let recs = log.chunk(chunk);
            ChunkScore {
                chunk,
                score: recs.iter().map(|r| r.metric).sum::<f64>() / recs.len() as f64,
                batches: recs.len(),
            }
        })
        .collect();
    if chunks.is_empty() {
        return Err(AnalysisError::NoEvaluatedChunks { eval_start });
    }
    let overall = chunks.iter().map(|c| c.score).sum::<f64>() / chunks.len() as f64;
    Ok(ChunkScores { chunks, overall })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DominantModel {
    pub chunk: usize,
    pub model: ModelId,
    pub batches: usize,
    pub total_batches: usize,
}

/// Per chunk, the model that served the most batches; ties go to the lower index.
pub fn dominant_model_per_chunk(log: &EventLog) -> Vec<DominantModel> {
    log.chunks()
        .into_iter()
        .map(|chunk| {
            let recs = log.chunk(chunk);
            let mut counts: BTreeMap<ModelId, usize> = BTreeMap::new();
            for r in recs {
                *counts.entry(r.selected).or_default() += 1;
            }
            let (model, batches) =
                counts.into_iter().fold(
                    (ModelId(0), 0),
                    |best, (m, n)| if n > best.1 { (m, n) } else { best },
                );
            DominantModel {
                chunk,
                model,
                batches,
                total_batches: recs.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub chunk: usize,
    /// Models selected at least once in the chunk, ascending.
    pub models: Vec<ModelId>,
    /// `probs[i][j]`: share of batches served by `models[i]` that were
    /// followed by a batch served by `models[j]`.
    pub probs: Vec<Vec<f64>>,
}

/// Batch-to-batch selection frequencies within one chunk.
pub fn transition_matrix(log: &EventLog, chunk: usize) -> Result<TransitionMatrix, AnalysisError> {
    let recs = log.chunk(chunk);
    if recs.len() < 2 {
        return Err(AnalysisError::ChunkTooShort {
            chunk,
            batches: recs.len(),
        });
    }
    let mut models: Vec<ModelId> = recs.iter().map(|r| r.selected).collect();
    models.sort_unstable();
    models.dedup();
    let pos = |m: ModelId| models.binary_search(&m).expect("model collected above");
    let k = models.len();
    let mut counts = vec![vec![0u64; k]; k];
    for w in recs.windows(2) {
        counts[pos(w[0].selected)][pos(w[1].selected)] += 1;
    }
    let probs = counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter()
                .map(|&c| {
                    if total == 0 {
                        0.0
                    } else {
                        c as f64 / total as f64
                    }
                })
                .collect()
        })
        .collect();
    Ok(TransitionMatrix {
        chunk,
        models,
        probs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub chunk: usize,
    pub batch: usize,
    pub model: ModelId,
    pub metric: f64,
}

pub fn selection_trace(log: &EventLog) -> Vec<TracePoint> {
    log.records()
        .iter()
        .map(|r| TracePoint {
            chunk: r.chunk,
            batch: r.batch,
            model: r.selected,
            metric: r.metric,
        })
        .collect()
}

pub fn chunk_scores_csv(scores: &ChunkScores) -> String {
    let mut out = String::from("chunk,score,batches\n");
    for c in &scores.chunks {
        writeln!(out, "{},{:.6},{}", c.chunk, c.score, c.batches).unwrap();
    }
    let total: usize = scores.chunks.iter().map(|c| c.batches).sum();
    writeln!(out, "overall,{:.6},{}", scores.overall, total).unwrap();
    out
}

pub fn dominant_models_csv(dominant: &[DominantModel]) -> String {
    let mut out = String::from("chunk,dominant_model,batches,total_batches\n");
    for d in dominant {
        writeln!(
            out,
            "{},{},{},{}",
            d.chunk, d.model, d.batches, d.total_batches
        )
        .unwrap();
    }
    out
}

pub fn selection_trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("chunk,batch,selected_model,metric\n");
    for p in trace {
        writeln!(out, "{},{},{},{:.6}", p.chunk, p.batch, p.model, p.metric).unwrap();
    }
    out
}

pub fn transition_json(m: &TransitionMatrix) -> String {
    serde_json::to_string_pretty(m).expect("matrix serializes") + "\n"
}

/// Writes every analysis artifact into `dir` and returns the written paths:
/// `chunk_scores.csv`, `dominant_models.csv`, `selection_trace.csv` and one
/// `transitions_chunk{t}.json` per evaluated chunk with at least two batches.
pub fn write_artifacts(log: &EventLog, eval_start: usize, dir: &Path) -> io::Result<Vec<PathBuf>> {
    let scores =
        chunk_scores(log, eval_start).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    let mut files = vec![
        ("chunk_scores.csv".to_string(), chunk_scores_csv(&scores)),
        (
            "dominant_models.csv".to_string(),
            dominant_models_csv(&dominant_model_per_chunk(log)),
        ),
        (
            "selection_trace.csv".to_string(),
            selection_trace_csv(&selection_trace(log)),
        ),
    ];
    for c in &scores.chunks {
        if let Ok(m) = transition_matrix(log, c.chunk) {
            files.push((
                format!("transitions_chunk{}.json", c.chunk),
                transition_json(&m),
            ));
        }
    }
    files
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            fs::write(&path, body)?;
            Ok(path)
        })
        .collect()
}
