//! Fixed-horizon A/B test between the deployed model and the newest one.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::PolicyError;
use crate::types::ModelId;

/// Smallest sigma an estimate may take.
pub const SIGMA_FLOOR: f64 = 1e-6;

fn standard_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Samples needed to detect an absolute effect `delta` with one-sided level
/// `alpha` and the given power: `ceil(((z(1-alpha) + z(power)) * sigma / delta)^2)`.
///
/// A non-positive quantile sum means no evidence is required; the result is
/// clamped to at least one sample.
pub fn required_sample_size(
    alpha: f64,
    power: f64,
    sigma: f64,
    delta: f64,
) -> Result<u64, PolicyError> {
    let open_unit = |x: f64| x > 0.0 && x < 1.0;
    if !open_unit(alpha) {
        return Err(PolicyError::InvalidArgument(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    if !open_unit(power) {
        return Err(PolicyError::InvalidArgument(format!(
            "power must be in (0, 1), got {power}"
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(PolicyError::InvalidArgument(format!(
            "sigma must be > 0, got {sigma}"
        )));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(PolicyError::InvalidArgument(format!(
            "delta must be > 0, got {delta}"
        )));
    }
    let z = (standard_normal_quantile(1.0 - alpha) + standard_normal_quantile(power)).max(0.0);
    let n = (z * sigma / delta).powi(2).ceil();
    if n >= u64::MAX as f64 {
        return Ok(u64::MAX);
    }
    Ok((n as u64).max(1))
}

/// Sample standard deviation of the last `window` values, floored at [`SIGMA_FLOOR`].
pub fn estimate_sigma(history: &[f64], window: usize) -> f64 {
    let tail = &history[history.len().saturating_sub(window)..];
    if tail.len() < 2 {
        return SIGMA_FLOOR;
    }
    let n = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / n;
    let var = tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt().max(SIGMA_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbTestState {
    pub incumbent: ModelId,
    pub challenger: ModelId,
    pub required_n: u64,
    pub collected_n: u64,
    pub incumbent_sum: f64,
    pub challenger_sum: f64,
    pub batches: u64,
    pub delta: f64,
    pub alpha: f64,
    pub power: f64,
    pub sigma_estimate: f64,
}

impl AbTestState {
    pub fn new(
        incumbent: ModelId,
        challenger: ModelId,
        alpha: f64,
        power: f64,
        sigma_estimate: f64,
        delta: f64,
    ) -> Result<Self, PolicyError> {
        if incumbent == challenger {
            return Err(PolicyError::InvalidArgument(
                "incumbent and challenger must differ".into(),
            ));
        }
        let required_n = required_sample_size(alpha, power, sigma_estimate, delta)?;
        Ok(AbTestState {
            incumbent,
            challenger,
            required_n,
            collected_n: 0,
            incumbent_sum: 0.0,
            challenger_sum: 0.0,
            batches: 0,
            delta,
            alpha,
            power,
            sigma_estimate,
        })
    }

    pub fn incumbent_mean(&self) -> f64 {
        self.incumbent_sum / self.batches as f64
    }

    pub fn challenger_mean(&self) -> f64 {
        self.challenger_sum / self.batches as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbDecision {
    pub winner: ModelId,
    /// The incumbent scored exactly zero, so the relative rule was replaced by
    /// `s_challenger > delta`.
    pub absolute_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AbStep {
    ContinueCollecting,
    Decision(AbDecision),
}

/// Challenger wins iff `(s_ch - s_inc) / s_inc > delta`.
pub fn ab_decide(
    incumbent: ModelId,
    challenger: ModelId,
    s_inc: f64,
    s_ch: f64,
    delta: f64,
) -> AbDecision {
    if s_inc == 0.0 {
        let winner = if s_ch > delta { challenger } else { incumbent };
        return AbDecision {
            winner,
            absolute_fallback: true,
        };
    }
    let winner = if (s_ch - s_inc) / s_inc > delta {
        challenger
    } else {
        incumbent
    };
    AbDecision {
        winner,
        absolute_fallback: false,
    }
}

/// Adds one batch scored by both models. No decision before `required_n`
/// examples have been collected, whatever the interim gap.
pub fn ab_step(
    state: &mut AbTestState,
    incumbent_metric: f64,
    challenger_metric: f64,
    batch_len: u64,
) -> AbStep {
    state.incumbent_sum += incumbent_metric;
    state.challenger_sum += challenger_metric;
    state.batches += 1;
    state.collected_n += batch_len;
    if state.collected_n < state.required_n {
        return AbStep::ContinueCollecting;
    }
    AbStep::Decision(ab_decide(
        state.incumbent,
        state.challenger,
        state.incumbent_mean(),
        state.challenger_mean(),
        state.delta,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_size_reference_value() {
        assert_eq!(required_sample_size(0.05, 0.80, 0.10, 0.02).unwrap(), 155);
    }

    #[test]
    fn sample_size_quadratic_in_sigma_over_delta() {
        let z = standard_normal_quantile(0.95) + standard_normal_quantile(0.8);
        let raw = |s: f64, d: f64| (z * s / d).powi(2);
        assert!((raw(0.2, 0.02) / raw(0.1, 0.02) - 4.0).abs() < 1e-12);
        assert!((raw(0.1, 0.01) / raw(0.1, 0.02) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sample_size_zero_quantiles_clamp_to_one() {
        assert_eq!(required_sample_size(0.5, 0.5, 3.0, 0.001).unwrap(), 1);
    }

    #[test]
    fn sample_size_rejects_bad_arguments() {
        assert!(required_sample_size(0.0, 0.8, 0.1, 0.02).is_err());
        assert!(required_sample_size(0.05, 1.0, 0.1, 0.02).is_err());
        assert!(required_sample_size(0.05, 0.8, 0.0, 0.02).is_err());
        assert!(required_sample_size(0.05, 0.8, 0.1, 0.0).is_err());
    }

    #[test]
    fn decide_examples() {
        let (i, c) = (ModelId(0), ModelId(1));
        assert_eq!(ab_decide(i, c, 0.60, 0.66, 0.05).winner, c);
        assert_eq!(ab_decide(i, c, 0.60, 0.62, 0.05).winner, i);
        let d = ab_decide(i, c, 0.0, 0.06, 0.05);
        assert!(d.absolute_fallback);
        assert_eq!(d.winner, c);
    }

    #[test]
    fn no_peeking_before_horizon() {
        let mut st = AbTestState::new(ModelId(0), ModelId(1), 0.05, 0.8, 0.1, 0.02).unwrap();
        assert_eq!(st.required_n, 155);
        // A huge interim gap must not end the test early.
        for _ in 0..15 {
            assert_eq!(ab_step(&mut st, 0.1, 0.9, 10), AbStep::ContinueCollecting);
        }
        match ab_step(&mut st, 0.1, 0.9, 10) {
            AbStep::Decision(d) => assert_eq!(d.winner, ModelId(1)),
            other => panic!("expected a decision, got {other:?}"),
        }
    }

    #[test]
    fn same_model_test_rejected() {
        assert!(AbTestState::new(ModelId(2), ModelId(2), 0.05, 0.8, 0.1, 0.02).is_err());
    }

    #[test]
    fn sigma_estimate_window_and_floor() {
        assert_eq!(estimate_sigma(&[], 10), SIGMA_FLOOR);
        assert_eq!(estimate_sigma(&[0.4], 10), SIGMA_FLOOR);
        assert_eq!(estimate_sigma(&[0.4, 0.4, 0.4], 10), SIGMA_FLOOR);
        // Only the trailing two values count.
        let s = estimate_sigma(&[100.0, 0.0, 2.0], 2);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
    }
}
