//! In-memory stream data: feature datasets for the built-in learner and score
//! matrices for offline replay.

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

use crate::types::ModelId;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("score out of range at row {row} for model {model}")]
    ScoreOutOfRange { row: u64, model: ModelId },
    #[error("label at line {line} is not binary (0/1): `{value}`")]
    NonBinaryLabel { line: u64, value: String },
    #[error("duplicate row_id {0}")]
    DuplicateRowId(u64),
    #[error("inconsistent shape: {0}")]
    Shape(String),
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    DataError::ParseError {
        line,
        message: e.to_string(),
    }
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, DataError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
}

fn parse_label(field: &str, line: u64) -> Result<bool, DataError> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(DataError::NonBinaryLabel {
            line,
            value: other.to_string(),
        }),
    }
}

fn parse_f64(field: &str, line: u64, column: &str) -> Result<f64, DataError> {
    field.parse::<f64>().map_err(|_| DataError::ParseError {
        line,
        message: format!("column `{column}`: `{field}` is not a number"),
    })
}

/// Labeled rows with dense numeric features, in stream order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub row_ids: Vec<u64>,
    pub labels: Vec<bool>,
    /// Row-major, `num_features` values per row.
    pub features: Vec<f64>,
    pub num_features: usize,
}

impl Dataset {
    pub fn new(
        row_ids: Vec<u64>,
        labels: Vec<bool>,
        features: Vec<f64>,
        num_features: usize,
    ) -> Result<Self, DataError> {
        if row_ids.len() != labels.len() || features.len() != labels.len() * num_features {
            return Err(DataError::Shape(format!(
                "{} ids, {} labels, {} feature values for {} features per row",
                row_ids.len(),
                labels.len(),
                features.len(),
                num_features
            )));
        }
        Ok(Dataset {
            row_ids,
            labels,
            features,
            num_features,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }
}

/// Reads a feature CSV: one header row, a binary `label_column`, every other
/// column numeric. Row ids are the 0-based data row positions.
pub fn load_dataset(path: &Path, label_column: &str) -> Result<Dataset, DataError> {
    let mut reader = open(path)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingColumn(label_column.to_string()))?;
    let num_features = headers.len() - 1;
    let (mut labels, mut features) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        for (i, field) in record.iter().enumerate() {
            if i == label_idx {
                labels.push(parse_label(field, line)?);
            } else {
                features.push(parse_f64(field, line, &headers[i])?);
            }
        }
    }
    let row_ids = (0..labels.len() as u64).collect();
    Dataset::new(row_ids, labels, features, num_features)
}

/// Every model's score on every row, in stream order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    row_ids: Vec<u64>,
    labels: Vec<bool>,
    columns: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new(
        row_ids: Vec<u64>,
        labels: Vec<bool>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Self, DataError> {
        if row_ids.len() != labels.len() {
            return Err(DataError::Shape(
                "row_ids and labels differ in length".into(),
            ));
        }
        let mut seen = HashSet::with_capacity(row_ids.len());
        if let Some(&dup) = row_ids.iter().find(|id| !seen.insert(**id)) {
            return Err(DataError::DuplicateRowId(dup));
        }
        for (m, col) in columns.iter().enumerate() {
            if col.len() != labels.len() {
                return Err(DataError::Shape(format!(
                    "column m{m} has {} rows",
                    col.len()
                )));
            }
            if let Some(r) = col.iter().position(|s| !(0.0..=1.0).contains(s)) {
                return Err(DataError::ScoreOutOfRange {
                    row: row_ids[r],
                    model: ModelId(m),
                });
            }
        }
        Ok(ScoreMatrix {
            row_ids,
            labels,
            columns,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_models(&self) -> usize {
        self.columns.len()
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn column(&self, model: ModelId) -> &[f64] {
        &self.columns[model.0]
    }

    /// Writes the replay format, `row_id,label,m0,...`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("row_id,label");
        for m in 0..self.num_models() {
            out.push_str(&format!(",m{m}"));
        }
        out.push('\n');
        for r in 0..self.len() {
            out.push_str(&format!("{},{}", self.row_ids[r], self.labels[r] as u8));
            for col in &self.columns {
                out.push_str(&format!(",{}", col[r]));
            }
            out.push('\n');
        }
        out
    }
}

/// Reads a replay scores file with header `row_id,label,m0,...,mk`.
pub fn load_replay_scores(path: &Path) -> Result<ScoreMatrix, DataError> {
    let mut reader = open(path)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let id_idx = find("row_id").ok_or_else(|| DataError::MissingColumn("row_id".into()))?;
    let label_idx = find("label").ok_or_else(|| DataError::MissingColumn("label".into()))?;
    let model_count = headers.len() - 2;
    if model_count == 0 {
        return Err(DataError::MissingColumn("m0".into()));
    }
    let model_idx: Vec<usize> = (0..model_count)
        .map(|m| find(&format!("m{m}")).ok_or_else(|| DataError::MissingColumn(format!("m{m}"))))
        .collect::<Result<_, _>>()?;

    let (mut row_ids, mut labels) = (Vec::new(), Vec::new());
    let mut columns = vec![Vec::new(); model_count];
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row_id = record[id_idx]
            .parse::<u64>()
            .map_err(|_| DataError::ParseError {
                line,
                message: format!("row_id `{}` is not a non-negative integer", &record[id_idx]),
            })?;
        labels.push(parse_label(&record[label_idx], line)?);
        for (m, &idx) in model_idx.iter().enumerate() {
            let s = parse_f64(&record[idx], line, &headers[idx])?;
            if !(0.0..=1.0).contains(&s) {
                return Err(DataError::ScoreOutOfRange {
                    row: row_id,
                    model: ModelId(m),
                });
            }
            columns[m].push(s);
        }
        row_ids.push(row_id);
    }
    ScoreMatrix::new(row_ids, labels, columns)
}
