//! Synthetic labeled streams with concept drift and a per-model overfit schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::data::Dataset;

const DATA_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScenario {
    pub num_features: usize,
    /// Per chunk, the size of the random step applied to the true coefficients
    /// (relative to `signal_strength`). Entry 0 is unused.
    pub drift_schedule: Vec<f64>,
    /// Per trained model, the fraction of its training labels it memorizes.
    pub overfit_schedule: Vec<f64>,
    /// Positive-class prevalence.
    pub class_imbalance: f64,
    pub examples_per_chunk: usize,
    /// Norm of the true coefficient vector.
    #[serde(default = "default_signal_strength")]
    pub signal_strength: f64,
}

fn default_signal_strength() -> f64 {
    3.0
}

impl SyntheticScenario {
    /// Heavy imbalance (1.1% positives), mild drift, models 2+ memorize
    /// 60-100% of their training labels.
    pub fn fraud_like() -> Self {
        SyntheticScenario {
            num_features: 8,
            drift_schedule: vec![0.0, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1],
            overfit_schedule: vec![0.0, 0.0, 0.6, 0.7, 0.8, 0.9, 1.0],
            class_imbalance: 0.011,
            examples_per_chunk: 7000,
            signal_strength: 4.0,
        }
    }

    /// Moderate imbalance (24% positives), steady drift, light overfitting of
    /// the later models.
    pub fn census_like() -> Self {
        SyntheticScenario {
            num_features: 8,
            drift_schedule: vec![0.0, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25],
            overfit_schedule: vec![0.0, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            class_imbalance: 0.24,
            examples_per_chunk: 3000,
            signal_strength: 2.0,
        }
    }

    /// Stretches or truncates both schedules to fit `num_chunks`, repeating the
    /// last entry when stretching.
    pub fn with_num_chunks(mut self, num_chunks: usize) -> Self {
        fn fit(v: &mut Vec<f64>, n: usize) {
            let last = v.last().copied().unwrap_or(0.0);
            v.resize(n, last);
        }
        fit(&mut self.drift_schedule, num_chunks);
        fit(&mut self.overfit_schedule, num_chunks.saturating_sub(1));
        self
    }

    pub fn violations(&self, num_chunks: usize) -> Vec<(String, &'static str)> {
        let mut out = Vec::new();
        if self.num_features == 0 {
            out.push(("num_features".into(), "must be >= 1"));
        }
        if self.drift_schedule.len() != num_chunks {
            out.push(("drift_schedule".into(), "length must equal num_chunks"));
        }
        if self
            .drift_schedule
            .iter()
            .any(|d| !(d.is_finite() && *d >= 0.0))
        {
            out.push(("drift_schedule".into(), "entries must be finite and >= 0"));
        }
        if self.overfit_schedule.len() + 1 != num_chunks {
            out.push((
                "overfit_schedule".into(),
                "length must equal num_chunks - 1",
            ));
        }
        if self
            .overfit_schedule
            .iter()
            .any(|s| !(0.0..=1.0).contains(s))
        {
            out.push(("overfit_schedule".into(), "entries must be in [0, 1]"));
        }
        if !(self.class_imbalance > 0.0 && self.class_imbalance < 1.0) {
            out.push(("class_imbalance".into(), "must be in (0, 1)"));
        }
        if self.examples_per_chunk == 0 {
            out.push(("examples_per_chunk".into(), "must be >= 1"));
        }
        if !(self.signal_strength.is_finite() && self.signal_strength > 0.0) {
            out.push(("signal_strength".into(), "must be > 0"));
        }
        out
    }

    /// Draws the full stream. Features are standard normal; labels follow a
    /// logistic model whose coefficients random-walk between chunks and whose
    /// intercept is re-calibrated per chunk to hit the target prevalence.
    pub fn generate(&self, num_chunks: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(DATA_STREAM);
        let d = self.num_features;
        let n = self.examples_per_chunk * num_chunks;

        let mut weights = scaled_direction(&mut rng, d, self.signal_strength);
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for t in 0..num_chunks {
            let step = self.drift_schedule.get(t).copied().unwrap_or(0.0);
            if t > 0 && step > 0.0 {
                let delta = scaled_direction(&mut rng, d, step * self.signal_strength);
                weights.iter_mut().zip(&delta).for_each(|(w, dw)| *w += dw);
            }
            let start = features.len();
            features.extend(
                (0..self.examples_per_chunk * d).map(|_| rng.sample::<f64, _>(StandardNormal)),
            );
            let logits: Vec<f64> = features[start..]
                .chunks_exact(d)
                .map(|x| x.iter().zip(&weights).map(|(a, b)| a * b).sum())
                .collect();
            let bias = calibrate_intercept(&logits, self.class_imbalance);
            labels.extend(
                logits
                    .iter()
                    .map(|z| rng.random::<f64>() < sigmoid(z + bias)),
            );
        }
        Dataset::new((0..n as u64).collect(), labels, features, d)
            .expect("generated shape is consistent")
    }
}

fn scaled_direction<R: Rng>(rng: &mut R, d: usize, norm: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let len = v
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    v.iter_mut().for_each(|x| *x *= norm / len);
    v
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Intercept `b` with `mean(sigmoid(z_i + b)) = prevalence`, by bisection.
fn calibrate_intercept(logits: &[f64], prevalence: f64) -> f64 {
    let mean_p = |b: f64| logits.iter().map(|z| sigmoid(z + b)).sum::<f64>() / logits.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < prevalence {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_fit_eight_chunks() {
        assert!(SyntheticScenario::fraud_like().violations(8).is_empty());
        assert!(SyntheticScenario::census_like().violations(8).is_empty());
        assert!(!SyntheticScenario::fraud_like().violations(5).is_empty());
        assert!(SyntheticScenario::fraud_like()
            .with_num_chunks(5)
            .violations(5)
            .is_empty());
        assert!(SyntheticScenario::fraud_like()
            .with_num_chunks(12)
            .violations(12)
            .is_empty());
    }

    #[test]
    fn prevalence_is_calibrated() {
        let s = SyntheticScenario {
            examples_per_chunk: 20_000,
            ..SyntheticScenario::census_like()
        };
        let data = s.generate(3, 5);
        for t in 0..3 {
            let chunk = &data.labels[t * 20_000..(t + 1) * 20_000];
            let p = chunk.iter().filter(|&&y| y).count() as f64 / chunk.len() as f64;
            assert!((p - 0.24).abs() < 0.02, "chunk {t} prevalence {p}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = SyntheticScenario {
            examples_per_chunk: 500,
            ..SyntheticScenario::fraud_like()
        };
        let a = s.generate(8, 11);
        let b = s.generate(8, 11);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.features, b.features);
        assert_ne!(s.generate(8, 12).features, a.features);
    }
}
