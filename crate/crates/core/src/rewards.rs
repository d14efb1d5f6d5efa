//! Reward functions that turn consecutive metric observations into bandit feedback.

use serde::{Deserialize, Serialize};

/// Which earlier observation a batch's metric is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardBaseline {
    /// The metric of whichever model served the previous batch.
    #[default]
    Pipeline,
    /// The metric the same arm obtained the last time it served.
    PerArm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardKind {
    BinaryImprovement,
    MseReduction,
    R2Improvement,
    ThresholdedReduction { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSpec {
    pub r_pos: f64,
    pub r_neg: f64,
    pub kind: RewardKind,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            r_pos: 1.0,
            r_neg: 0.0,
            kind: RewardKind::BinaryImprovement,
        }
    }
}

impl RewardSpec {
    /// Reward for `current` against an optional baseline. With no baseline
    /// (first observation) no improvement has been shown, so the result is `r_neg`.
    pub fn reward(&self, current: f64, previous: Option<f64>) -> f64 {
        let Some(previous) = previous else {
            return self.r_neg;
        };
        match self.kind {
            RewardKind::BinaryImprovement => binary_improvement(current, previous, self),
            RewardKind::MseReduction => mse_reduction(current, previous),
            RewardKind::R2Improvement => r2_improvement(current, previous),
            RewardKind::ThresholdedReduction { threshold } => {
                thresholded_reduction(mse_reduction(current, previous), threshold)
            }
        }
    }
}

/// `r_pos` iff the metric strictly improved, else `r_neg`.
pub fn binary_improvement(current: f64, previous: f64, spec: &RewardSpec) -> f64 {
    if current > previous {
        spec.r_pos
    } else {
        spec.r_neg
    }
}

/// Positive when the error went down.
pub fn mse_reduction(current_mse: f64, previous_mse: f64) -> f64 {
    -(current_mse - previous_mse)
}

pub fn r2_improvement(current_r2: f64, previous_r2: f64) -> f64 {
    current_r2 - previous_r2
}

/// 1 iff the error reduction strictly exceeds `threshold`.
pub fn thresholded_reduction(error_reduction: f64, threshold: f64) -> f64 {
    if error_reduction > threshold {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn binary_improvement_examples() {
        let spec = RewardSpec::default();
        assert_eq!(binary_improvement(0.70, 0.65, &spec), 1.0);
        assert_eq!(binary_improvement(0.65, 0.65, &spec), 0.0);
        assert_eq!(binary_improvement(0.60, 0.65, &spec), 0.0);
    }

    #[test]
    fn binary_improvement_custom_levels() {
        let spec = RewardSpec {
            r_pos: 2.0,
            r_neg: -1.0,
            ..RewardSpec::default()
        };
        assert_eq!(binary_improvement(0.9, 0.1, &spec), 2.0);
        assert_eq!(binary_improvement(0.1, 0.9, &spec), -1.0);
    }

    #[test]
    fn first_observation_gets_r_neg() {
        let spec = RewardSpec::default();
        assert_eq!(spec.reward(0.99, None), 0.0);
    }

    #[test]
    fn regression_reward_examples() {
        assert!(close(mse_reduction(0.4, 0.5), 0.1));
        assert_eq!(mse_reduction(0.5, 0.5), 0.0);
        assert!(close(mse_reduction(0.7, 0.5), -0.2));
        assert!(close(r2_improvement(0.8, 0.7), 0.1));
        assert_eq!(r2_improvement(0.7, 0.7), 0.0);
        assert!(close(r2_improvement(0.6, 0.7), -0.1));
        assert_eq!(thresholded_reduction(0.05, 0.01), 1.0);
        assert_eq!(thresholded_reduction(0.01, 0.01), 0.0);
        assert_eq!(thresholded_reduction(-0.1, 0.0), 0.0);
    }

    proptest! {
        #[test]
        fn binary_improvement_is_monotone(a in -1.0f64..2.0, b in -1.0f64..2.0, p in -1.0f64..2.0) {
            let spec = RewardSpec::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(binary_improvement(lo, p, &spec) <= binary_improvement(hi, p, &spec));
            prop_assert!(binary_improvement(p, lo, &spec) >= binary_improvement(p, hi, &spec));
        }

        #[test]
        fn mse_reduction_is_antisymmetric(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            prop_assert_eq!(mse_reduction(a, b), -mse_reduction(b, a));
        }

        #[test]
        fn thresholded_composition_matches_direct(a in 0.0f64..10.0, b in 0.0f64..10.0, t in -1.0f64..1.0) {
            let spec = RewardSpec { kind: RewardKind::ThresholdedReduction { threshold: t }, ..RewardSpec::default() };
            let direct = if b - a > t { 1.0 } else { 0.0 };
            prop_assert_eq!(spec.reward(a, Some(b)), direct);
        }
    }
}
