//! Built-in scorers: a plain logistic model, optionally wrapped so that it
//! memorizes part of its training labels.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::data::Dataset;
use super::synthetic::sigmoid;
use super::EnvError;

pub const EPOCHS: usize = 500;
pub const STEP_SIZE: f64 = 0.1;

/// Model `k` draws its memorization choices from stream `MODEL_STREAM + k`.
const MODEL_STREAM: u64 = 1 << 21;

/// Logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

impl LogisticModel {
    /// Full-batch gradient descent on the mean log-loss, [`EPOCHS`] steps of
    /// size [`STEP_SIZE`]. The intercept starts at the training log-odds.
    pub fn fit(data: &Dataset, rows: &[usize]) -> Result<Self, EnvError> {
        let positives = rows.iter().filter(|&&r| data.labels[r]).count();
        if rows.is_empty() || positives == 0 || positives == rows.len() {
            return Err(EnvError::DegenerateTrainingSet {
                rows: rows.len(),
                positives,
            });
        }
        let d = data.num_features;
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &r in rows {
            mean.iter_mut()
                .zip(data.row(r))
                .for_each(|(m, x)| *m += x / n);
        }
        let mut scale = vec![0.0; d];
        for &r in rows {
            for ((s, x), m) in scale.iter_mut().zip(data.row(r)).zip(&mean) {
                *s += (x - m).powi(2) / n;
            }
        }
        scale
            .iter_mut()
            .for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });

        let z: Vec<f64> = rows
            .iter()
            .flat_map(|&r| {
                data.row(r)
                    .iter()
                    .zip(&mean)
                    .zip(&scale)
                    .map(|((x, m), s)| (x - m) / s)
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|&r| data.labels[r] as u8 as f64).collect();

        let prior = positives as f64 / n;
        let mut bias = (prior / (1.0 - prior)).ln();
        let mut weights = vec![0.0; d];
        let mut grad = vec![0.0; d];
        for _ in 0..EPOCHS {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for (x, &yi) in z.chunks_exact(d).zip(&y) {
                let p = sigmoid(bias + dot(x, &weights));
                let err = p - yi;
                grad_b += err;
                grad.iter_mut().zip(x).for_each(|(g, xi)| *g += err * xi);
            }
            bias -= STEP_SIZE * grad_b / n;
            weights
                .iter_mut()
                .zip(&grad)
                .for_each(|(w, g)| *w -= STEP_SIZE * g / n);
        }
        Ok(LogisticModel {
            mean,
            scale,
            weights,
            bias,
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let z: f64 = x
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .zip(&self.weights)
            .map(|(((xi, m), s), w)| (xi - m) / s * w)
            .sum();
        sigmoid(self.bias + z)
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((xi, m), s)| (xi - m) / s)
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A logistic model blended with a label lookup: memorized training rows
/// score `(1 - s) p + s y`, every other row `(1 - s) p + s leaf(x)`, where
/// `leaf` is the mean memorized label in the row's random-hyperplane cell.
#[derive(Debug, Clone)]
pub struct MemorizingModel {
    base: LogisticModel,
    strength: f64,
    memorized: HashMap<usize, bool>,
    planes: Vec<(Vec<f64>, f64)>,
    cells: HashMap<u32, (u32, u32)>,
    fallback: f64,
}

impl MemorizingModel {
    fn cell(&self, z: &[f64]) -> u32 {
        self.planes
            .iter()
            .enumerate()
            .fold(0, |acc, (i, (dir, offset))| {
                acc | (((dot(z, dir) > *offset) as u32) << i)
            })
    }

    fn leaf(&self, x: &[f64]) -> f64 {
        match self.cells.get(&self.cell(&self.base.standardize(x))) {
            Some(&(pos, count)) => pos as f64 / count as f64,
            None => self.fallback,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Scorer {
    Logistic(LogisticModel),
    Memorizing(Box<MemorizingModel>),
}

impl Scorer {
    /// Score of dataset row `row`, in [0, 1].
    pub fn score(&self, data: &Dataset, row: usize) -> f64 {
        match self {
            Scorer::Logistic(m) => m.predict(data.row(row)),
            Scorer::Memorizing(m) => {
                let p = m.base.predict(data.row(row));
                let recalled = match m.memorized.get(&row) {
                    Some(&y) => y as u8 as f64,
                    None => m.leaf(data.row(row)),
                };
                ((1.0 - m.strength) * p + m.strength * recalled).clamp(0.0, 1.0)
            }
        }
    }

    pub fn score_all(&self, data: &Dataset) -> Vec<f64> {
        (0..data.len()).map(|r| self.score(data, r)).collect()
    }
}

/// Trains model `model_index` on `train` rows. A positive `overfit` makes it
/// memorize that fraction of its training labels, chosen by `seed`.
pub fn train_scorer(
    data: &Dataset,
    train: &[usize],
    overfit: f64,
    model_index: usize,
    seed: u64,
) -> Result<Scorer, EnvError> {
    let base = LogisticModel::fit(data, train)?;
    if overfit <= 0.0 {
        return Ok(Scorer::Logistic(base));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(MODEL_STREAM + model_index as u64);

    let n_mem = ((train.len() as f64 * overfit).round() as usize).clamp(1, train.len());
    let chosen: HashSet<usize> = rand::seq::index::sample(&mut rng, train.len(), n_mem)
        .into_iter()
        .map(|i| train[i])
        .collect();
    let mut rows: Vec<usize> = chosen.into_iter().collect();
    rows.sort_unstable();

    let k = ((n_mem as f64).log2().ceil() as usize).clamp(4, 24);
    let d = data.num_features;
    let planes = (0..k)
        .map(|_| {
            let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            let offset: f64 = rng.sample(StandardNormal);
            (dir.into_iter().map(|v| v / norm).collect(), offset)
        })
        .collect();
    let positives = train.iter().filter(|&&r| data.labels[r]).count();
    let mut model = MemorizingModel {
        fallback: positives as f64 / train.len() as f64,
        base,
        strength: overfit.min(1.0),
        memorized: rows.iter().map(|&r| (r, data.labels[r])).collect(),
        planes,
        cells: HashMap::new(),
    };
    for &r in &rows {
        let cell = model.cell(&model.base.standardize(data.row(r)));
        let entry = model.cells.entry(cell).or_insert((0, 0));
        entry.0 += data.labels[r] as u32;
        entry.1 += 1;
    }
    Ok(Scorer::Memorizing(Box::new(model)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{balanced_accuracy, pr_auc, ScoredBatch};

    fn separable(n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let x: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            labels.push(x[0] + 0.5 * x[1] > 0.0);
            features.extend(x);
        }
        Dataset::new((0..n as u64).collect(), labels, features, 2).unwrap()
    }

    fn ba(data: &Dataset, rows: &[usize], scorer: &Scorer) -> f64 {
        let s: Vec<f64> = rows.iter().map(|&r| scorer.score(data, r)).collect();
        let y: Vec<bool> = rows.iter().map(|&r| data.labels[r]).collect();
        balanced_accuracy(&ScoredBatch::new(&s, &y).unwrap(), 0.5).unwrap()
    }

    #[test]
    fn separable_data_fits_well() {
        let data = separable(400);
        let rows: Vec<usize> = (0..400).collect();
        let scorer = train_scorer(&data, &rows, 0.0, 0, 1).unwrap();
        assert!(ba(&data, &rows, &scorer) >= 0.95);
    }

    #[test]
    fn single_class_rejected() {
        let data = Dataset::new(vec![0, 1], vec![true, true], vec![0.0, 1.0], 1).unwrap();
        assert!(matches!(
            train_scorer(&data, &[0, 1], 0.0, 0, 0),
            Err(EnvError::DegenerateTrainingSet {
                rows: 2,
                positives: 2
            })
        ));
    }

    #[test]
    fn full_memorization_recalls_training_labels() {
        let data = separable(200);
        let rows: Vec<usize> = (0..200).collect();
        let scorer = train_scorer(&data, &rows, 1.0, 3, 7).unwrap();
        let s = scorer.score_all(&data);
        let auc = pr_auc(&ScoredBatch::new(&s, &data.labels).unwrap()).unwrap();
        assert_eq!(auc, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(300);
        let rows: Vec<usize> = (0..200).collect();
        let a = train_scorer(&data, &rows, 0.6, 2, 5)
            .unwrap()
            .score_all(&data);
        let b = train_scorer(&data, &rows, 0.6, 2, 5)
            .unwrap()
            .score_all(&data);
        assert_eq!(a, b);
    }
}
