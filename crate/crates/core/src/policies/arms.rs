use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::types::ModelId;

/// Normal-Gamma belief over an arm's metric mean and precision.
///
/// `mean ~ N(mu, 1 / (kappa * tau))`, `tau ~ Gamma(shape = alpha, rate = beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalGammaParams {
    pub mu: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for NormalGammaParams {
    fn default() -> Self {
        NormalGammaParams {
            mu: 0.5,
            kappa: 1.0,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl NormalGammaParams {
    /// Returns the name of the first violated parameter constraint, if any.
    pub fn violation(&self) -> Option<(&'static str, &'static str)> {
        if !self.mu.is_finite() {
            return Some(("mu", "must be finite"));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Some(("kappa", "must be finite and > 0"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.5) {
            return Some(("alpha", "must be finite and > 0.5"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Some(("beta", "must be finite and > 0"));
        }
        None
    }

    /// One draw of the arm's mean metric from the posterior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // rand_distr's Gamma takes a scale; the rate is beta.
        let precision = Gamma::new(self.alpha, 1.0 / self.beta)
            .expect("alpha, beta validated positive")
            .sample(rng);
        let sd = (self.kappa * precision).recip().sqrt();
        if !sd.is_finite() {
            // tau underflowed to 0: the draw is unbounded, fall back to the location.
            return self.mu;
        }
        Normal::new(self.mu, sd)
            .expect("finite standard deviation")
            .sample(rng)
    }
}

/// Conjugate single-observation update.
pub fn thompson_update(p: NormalGammaParams, x: f64) -> NormalGammaParams {
    let kappa = p.kappa + 1.0;
    let dev = x - p.mu;
    NormalGammaParams {
        mu: (p.kappa * p.mu + x) / kappa,
        kappa,
        alpha: p.alpha + 0.5,
        beta: p.beta + p.kappa * dev * dev / (2.0 * kappa),
    }
}

/// Everything a policy knows about one candidate model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub model: ModelId,
    pub q_value: f64,
    pub pull_count: u64,
    pub mean_metric: f64,
    pub validation_score: f64,
    pub posterior: NormalGammaParams,
    /// Metric from this arm's most recent batch.
    pub last_metric: Option<f64>,
}

impl ArmState {
    pub fn new(
        model: ModelId,
        validation_score: f64,
        q_init: f64,
        prior: NormalGammaParams,
    ) -> Self {
        ArmState {
            model,
            q_value: q_init,
            pull_count: 0,
            mean_metric: 0.0,
            validation_score,
            posterior: prior,
            last_metric: None,
        }
    }

    /// Folds one served batch into every statistic.
    pub fn record(&mut self, metric: f64, reward: f64) {
        self.pull_count += 1;
        *self = update_q(*self, reward);
        self.mean_metric += (metric - self.mean_metric) / self.pull_count as f64;
        self.posterior = thompson_update(self.posterior, metric);
        self.last_metric = Some(metric);
    }
}

/// Incremental-mean Q update. `pull_count` must already count this pull.
pub fn update_q(mut state: ArmState, reward: f64) -> ArmState {
    debug_assert!(state.pull_count >= 1);
    state.q_value += (reward - state.q_value) / state.pull_count as f64;
    state
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arm(q: f64, n: u64) -> ArmState {
        ArmState {
            pull_count: n,
            ..ArmState::new(ModelId(0), 0.0, q, NormalGammaParams::default())
        }
    }

    #[test]
    fn update_q_forced_arithmetic() {
        assert_eq!(update_q(arm(0.5, 2), 1.0).q_value, 0.75);
    }

    #[test]
    fn first_pull_overwrites_init() {
        assert_eq!(update_q(arm(123.0, 1), 0.25).q_value, 0.25);
    }

    #[test]
    fn update_at_prior_mean() {
        let p = thompson_update(NormalGammaParams::default(), 0.5);
        assert_eq!(
            p,
            NormalGammaParams {
                mu: 0.5,
                kappa: 2.0,
                alpha: 1.5,
                beta: 1.0
            }
        );
    }

    #[test]
    fn update_off_mean() {
        let p = thompson_update(NormalGammaParams::default(), 0.9);
        assert!((p.mu - 0.7).abs() < 1e-15);
        assert_eq!(p.kappa, 2.0);
        assert_eq!(p.alpha, 1.5);
        // 1 + 1 * 0.16 / 4
        assert!((p.beta - 1.04).abs() < 1e-15);
    }

    #[test]
    fn record_tracks_mean_metric() {
        let mut a = ArmState::new(ModelId(3), 0.7, 1.0, NormalGammaParams::default());
        for (m, r) in [(0.2, 0.0), (0.4, 1.0), (0.9, 1.0)] {
            a.record(m, r);
        }
        assert_eq!(a.pull_count, 3);
        assert!((a.mean_metric - 0.5).abs() < 1e-15);
        assert!((a.q_value - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.last_metric, Some(0.9));
    }

    #[test]
    fn prior_violations() {
        assert!(NormalGammaParams::default().violation().is_none());
        let bad = NormalGammaParams {
            alpha: 0.5,
            ..Default::default()
        };
        assert_eq!(bad.violation().unwrap().0, "alpha");
        let bad = NormalGammaParams {
            kappa: 0.0,
            ..Default::default()
        };
        assert_eq!(bad.violation().unwrap().0, "kappa");
    }
}
