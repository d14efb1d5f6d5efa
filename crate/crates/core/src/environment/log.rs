//! Per-batch event log and run summary, with their on-disk formats.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::ModelId;

pub const EVENT_COLUMNS: [&str; 5] = ["chunk", "batch", "selected_model", "metric", "reward"];
pub const DIGEST_COLUMN: &str = "policy_snapshot_digest";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("event log line {line}: {message}")]
    Parse { line: u64, message: String },
}

impl LogError {
    /// 1-based line of the offending record, when known.
    pub fn line(&self) -> Option<u64> {
        match self {
            LogError::Parse { line, .. } => Some(*line),
            LogError::Io { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub chunk: usize,
    pub batch: usize,
    pub selected: ModelId,
    pub metric: f64,
    pub reward: f64,
    pub policy_snapshot_digest: Option<String>,
}

/// Records ordered by `(chunk, batch)`, at most one per pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a log from records, checking the ordering invariant.
    pub fn from_records(records: Vec<EventRecord>) -> Result<Self, LogError> {
        let mut log = EventLog::new();
        for (i, r) in records.into_iter().enumerate() {
            log.push(r).map_err(|message| LogError::Parse {
                line: i as u64 + 2,
                message,
            })?;
        }
        Ok(log)
    }

    pub fn push(&mut self, record: EventRecord) -> Result<(), String> {
        if let Some(last) = self.records.last() {
            if (record.chunk, record.batch) <= (last.chunk, last.batch) {
                return Err(format!(
                    "record ({}, {}) does not follow ({}, {})",
                    record.chunk, record.batch, last.chunk, last.batch
                ));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of one chunk, in batch order.
    pub fn chunk(&self, chunk: usize) -> &[EventRecord] {
        let start = self.records.partition_point(|r| r.chunk < chunk);
        let end = self.records.partition_point(|r| r.chunk <= chunk);
        &self.records[start..end]
    }

    /// Distinct chunk indices, ascending.
    pub fn chunks(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.records.iter().map(|r| r.chunk).collect();
        out.dedup();
        out
    }

    /// CSV with the five event columns, plus the digest column when every
    /// record carries one. Reals use the shortest exact representation.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let with_digest = !self.records.is_empty()
            && self
                .records
                .iter()
                .all(|r| r.policy_snapshot_digest.is_some());
        let mut w = csv::Writer::from_writer(out);
        let mut header = EVENT_COLUMNS.to_vec();
        if with_digest {
            header.push(DIGEST_COLUMN);
        }
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.chunk.to_string(),
                r.batch.to_string(),
                r.selected.0.to_string(),
                r.metric.to_string(),
                r.reward.to_string(),
            ];
            if with_digest {
                row.push(r.policy_snapshot_digest.clone().unwrap_or_default());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<(), LogError> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| io_error(path, e))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, LogError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = reader
            .headers()
            .map_err(|e| LogError::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let mut idx = [0usize; 5];
        for (slot, name) in idx.iter_mut().zip(EVENT_COLUMNS) {
            *slot = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| LogError::Parse {
                    line: 1,
                    message: format!("missing column `{name}`"),
                })?;
        }
        let digest_idx = headers.iter().position(|h| h == DIGEST_COLUMN);

        let mut log = EventLog::new();
        for record in reader.records() {
            let record = record.map_err(|e| LogError::Parse {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let err = |message: String| LogError::Parse { line, message };
            let int = |i: usize| {
                record[idx[i]].parse::<usize>().map_err(|_| {
                    err(format!(
                        "{} `{}` is not a non-negative integer",
                        EVENT_COLUMNS[i], &record[idx[i]]
                    ))
                })
            };
            let real = |i: usize| match record[idx[i]].parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(err(format!(
                    "{} `{}` is not a finite number",
                    EVENT_COLUMNS[i], &record[idx[i]]
                ))),
            };
            let event = EventRecord {
                chunk: int(0)?,
                batch: int(1)?,
                selected: ModelId(int(2)?),
                metric: real(3)?,
                reward: real(4)?,
                policy_snapshot_digest: digest_idx
                    .map(|i| record[i].to_string())
                    .filter(|s| !s.is_empty()),
            };
            log.push(event).map_err(err)?;
        }
        Ok(log)
    }

    pub fn load(path: &Path) -> Result<Self, LogError> {
        let file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> LogError {
    LogError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// `summary.json`: mean metric per evaluated chunk and their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub policy: String,
    pub overall: f64,
    pub chunk_scores: Vec<f64>,
    pub config_digest: String,
    pub seed: u64,
}

impl Summary {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(chunk: usize, batch: usize, m: usize, metric: f64) -> EventRecord {
        EventRecord {
            chunk,
            batch,
            selected: ModelId(m),
            metric,
            reward: 1.0,
            policy_snapshot_digest: None,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let log = EventLog::from_records(vec![
            rec(1, 0, 0, 0.1 + 0.2),
            rec(1, 1, 0, 1.0 / 3.0),
            rec(2, 0, 1, 0.0),
        ])
        .unwrap();
        let text = log.to_csv_string();
        assert!(text.starts_with("chunk,batch,selected_model,metric,reward\n"));
        assert_eq!(EventLog::read_csv(text.as_bytes()).unwrap(), log);
    }

    #[test]
    fn digest_column_round_trips() {
        let mut r = rec(1, 0, 0, 0.5);
        r.policy_snapshot_digest = Some("00ff00ff00ff00ff".into());
        let log = EventLog::from_records(vec![r]).unwrap();
        assert_eq!(
            EventLog::read_csv(log.to_csv_string().as_bytes()).unwrap(),
            log
        );
    }

    #[test]
    fn truncated_row_reports_line() {
        let text = "chunk,batch,selected_model,metric,reward\n1,0,0,0.5,1\n1,1,0,0.4,0\n1,2,0\n";
        let err = EventLog::read_csv(text.as_bytes()).unwrap_err();
        assert_eq!(err.line(), Some(4));
    }

    #[test]
    fn bad_values_report_line() {
        let text = "chunk,batch,selected_model,metric,reward\n1,0,0,0.5,1\n1,1,x,0.4,0\n";
        assert_eq!(
            EventLog::read_csv(text.as_bytes()).unwrap_err().line(),
            Some(3)
        );
        let text = "chunk,batch,selected_model,metric,reward\n1,0,0,NaN,1\n";
        assert_eq!(
            EventLog::read_csv(text.as_bytes()).unwrap_err().line(),
            Some(2)
        );
        let text = "chunk,batch,selected_model,metric,reward\n1,1,0,0.5,1\n1,1,0,0.5,1\n";
        assert_eq!(
            EventLog::read_csv(text.as_bytes()).unwrap_err().line(),
            Some(3)
        );
    }

    #[test]
    fn chunk_slices() {
        let log = EventLog::from_records(vec![
            rec(1, 0, 0, 0.5),
            rec(2, 0, 1, 0.5),
            rec(2, 1, 0, 0.5),
            rec(4, 0, 2, 0.5),
        ])
        .unwrap();
        assert_eq!(log.chunks(), vec![1, 2, 4]);
        assert_eq!(log.chunk(2).len(), 2);
        assert!(log.chunk(3).is_empty());
    }
}
