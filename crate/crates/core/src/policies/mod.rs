//! Deployment strategies: naive replacement, validation gating, A/B testing,
//! epsilon-greedy, UCB and Thompson sampling.
//!
//! The free functions in [`selection`], [`ab`] and [`arms`] are the pure rules.
//! [`Policy`] wraps one strategy with its arm table and random stream and is
//! what the simulation loop drives batch by batch.

pub mod ab;
pub mod arms;
pub mod selection;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use ab::{
    ab_decide, ab_step, estimate_sigma, required_sample_size, AbDecision, AbStep, AbTestState,
};
pub use arms::{thompson_update, update_q, ArmState, NormalGammaParams};
pub use selection::{
    epsilon_decay, greedy_q, select_epsilon_greedy, select_naive, select_ucb, select_validation,
    thompson_sample, ucb_bonus,
};

use crate::rewards::RewardSpec;
use crate::types::ModelId;

/// Random stream reserved for policy decisions.
const POLICY_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid policy context: {0}")]
    InvalidContext(String),
}

/// The inputs of one selection decision.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyContext {
    /// Non-empty and strictly increasing.
    pub available_models: Vec<ModelId>,
    /// Batches served so far across all chunks, counting this one (starts at 1).
    pub global_batch: u64,
    pub chunk_index: usize,
    pub previous_batch_metric: Option<f64>,
}

impl PolicyContext {
    pub fn new(
        available_models: Vec<ModelId>,
        global_batch: u64,
        chunk_index: usize,
        previous_batch_metric: Option<f64>,
    ) -> Result<Self, PolicyError> {
        if available_models.is_empty() {
            return Err(PolicyError::InvalidContext("no models available".into()));
        }
        if available_models.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PolicyError::InvalidContext(
                "available models must be strictly increasing".into(),
            ));
        }
        if global_batch == 0 {
            return Err(PolicyError::InvalidContext(
                "global batch counter starts at 1".into(),
            ));
        }
        Ok(PolicyContext {
            available_models,
            global_batch,
            chunk_index,
            previous_batch_metric,
        })
    }

    pub fn newest(&self) -> ModelId {
        *self
            .available_models
            .last()
            .expect("non-empty by construction")
    }
}

/// Strategy choice and hyperparameters, as written in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", from = "StrictStrategy")]
pub enum Strategy {
    Naive,
    Validation,
    AbTest {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_power")]
        power: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        /// Trailing batches of the incumbent used to estimate sigma.
        #[serde(default = "default_sigma_window")]
        sigma_window: usize,
    },
    EpsilonGreedy {
        epsilon: f64,
        /// Decay rate lambda; 0 keeps epsilon fixed.
        #[serde(default)]
        decay: f64,
    },
    Ucb {
        c: f64,
    },
    Thompson {
        #[serde(default)]
        prior: NormalGammaParams,
    },
}

/// Parsing mirror of [`Strategy`]. Unit variants would silently accept
/// extra keys, so they are empty structs here.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum StrictStrategy {
    Naive {},
    Validation {},
    AbTest {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_power")]
        power: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_sigma_window")]
        sigma_window: usize,
    },
    EpsilonGreedy {
        epsilon: f64,
        #[serde(default)]
        decay: f64,
    },
    Ucb {
        c: f64,
    },
    Thompson {
        #[serde(default)]
        prior: NormalGammaParams,
    },
}

impl From<StrictStrategy> for Strategy {
    fn from(raw: StrictStrategy) -> Self {
        match raw {
            StrictStrategy::Naive {} => Strategy::Naive,
            StrictStrategy::Validation {} => Strategy::Validation,
            StrictStrategy::AbTest {
                alpha,
                power,
                delta,
                sigma_window,
            } => Strategy::AbTest {
                alpha,
                power,
                delta,
                sigma_window,
            },
            StrictStrategy::EpsilonGreedy { epsilon, decay } => {
                Strategy::EpsilonGreedy { epsilon, decay }
            }
            StrictStrategy::Ucb { c } => Strategy::Ucb { c },
            StrictStrategy::Thompson { prior } => Strategy::Thompson { prior },
        }
    }
}

fn default_alpha() -> f64 {
    0.05
}
fn default_power() -> f64 {
    0.8
}
fn default_delta() -> f64 {
    0.05
}
fn default_sigma_window() -> usize {
    10
}

impl Strategy {
    pub fn ab_test() -> Self {
        Strategy::AbTest {
            alpha: default_alpha(),
            power: default_power(),
            delta: default_delta(),
            sigma_window: default_sigma_window(),
        }
    }

    pub fn thompson() -> Self {
        Strategy::Thompson {
            prior: NormalGammaParams::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Naive => "naive",
            Strategy::Validation => "validation",
            Strategy::AbTest { .. } => "ab_test",
            Strategy::EpsilonGreedy { .. } => "epsilon_greedy",
            Strategy::Ucb { .. } => "ucb",
            Strategy::Thompson { .. } => "thompson",
        }
    }

    /// Short human-readable label including hyperparameters.
    pub fn label(&self) -> String {
        match *self {
            Strategy::Naive | Strategy::Validation => self.name().to_string(),
            Strategy::AbTest {
                alpha,
                power,
                delta,
                ..
            } => {
                format!("ab_test(alpha={alpha},power={power},delta={delta})")
            }
            Strategy::EpsilonGreedy { epsilon, decay } if decay > 0.0 => {
                format!("epsilon_greedy(eps={epsilon},decay={decay})")
            }
            Strategy::EpsilonGreedy { epsilon, .. } => format!("epsilon_greedy(eps={epsilon})"),
            Strategy::Ucb { c } => format!("ucb(c={c})"),
            Strategy::Thompson { .. } => "thompson".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
enum StrategyState {
    Naive,
    Validation {
        deployed: Option<ModelId>,
    },
    AbTest {
        alpha: f64,
        power: f64,
        delta: f64,
        sigma_window: usize,
        deployed: Option<ModelId>,
        test: Option<AbTestState>,
        last_challenger: Option<ModelId>,
        #[serde(skip)]
        served: Vec<(ModelId, f64)>,
        #[serde(skip)]
        previous_chunk: Vec<(ModelId, f64)>,
    },
    EpsilonGreedy {
        epsilon0: f64,
        decay: f64,
        epsilon: f64,
    },
    Ucb {
        c: f64,
    },
    Thompson,
}

/// Serializable view of a policy's state after a batch.
#[derive(Debug, Clone, Serialize)]
pub struct PolicySnapshot<'a> {
    #[serde(flatten)]
    strategy: &'a StrategyState,
    arms: &'a [ArmState],
}

/// A stateful deployment policy.
#[derive(Debug, Clone)]
pub struct Policy {
    state: StrategyState,
    arms: Vec<ArmState>,
    q_init: f64,
    prior: NormalGammaParams,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl Policy {
    /// New arms start optimistic, at `reward.r_pos`.
    pub fn new(strategy: &Strategy, reward: &RewardSpec, seed: u64, batch_size: usize) -> Self {
        let mut prior = NormalGammaParams::default();
        let state = match *strategy {
            Strategy::Naive => StrategyState::Naive,
            Strategy::Validation => StrategyState::Validation { deployed: None },
            Strategy::AbTest {
                alpha,
                power,
                delta,
                sigma_window,
            } => StrategyState::AbTest {
                alpha,
                power,
                delta,
                sigma_window,
                deployed: None,
                test: None,
                last_challenger: None,
                served: Vec::new(),
                previous_chunk: Vec::new(),
            },
            Strategy::EpsilonGreedy { epsilon, decay } => StrategyState::EpsilonGreedy {
                epsilon0: epsilon,
                decay,
                epsilon,
            },
            Strategy::Ucb { c } => StrategyState::Ucb { c },
            Strategy::Thompson { prior: p } => {
                prior = p;
                StrategyState::Thompson
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(POLICY_STREAM);
        Policy {
            state,
            arms: Vec::new(),
            q_init: reward.r_pos,
            prior,
            batch_size,
            rng,
        }
    }

    pub fn arms(&self) -> &[ArmState] {
        &self.arms
    }

    /// Adds the next model. Models must be registered in index order.
    pub fn register_model(
        &mut self,
        id: ModelId,
        validation_score: f64,
    ) -> Result<(), PolicyError> {
        if id.0 != self.arms.len() {
            return Err(PolicyError::InvalidArgument(format!(
                "model {id} registered out of order (expected {})",
                self.arms.len()
            )));
        }
        self.arms
            .push(ArmState::new(id, validation_score, self.q_init, self.prior));
        Ok(())
    }

    fn check_context(&self, ctx: &PolicyContext) -> Result<(), PolicyError> {
        if ctx.newest().0 >= self.arms.len() {
            return Err(PolicyError::InvalidContext(format!(
                "model {} is not registered",
                ctx.newest()
            )));
        }
        Ok(())
    }

    /// Chunk-boundary bookkeeping: validation gating and A/B test start.
    pub fn begin_chunk(&mut self, ctx: &PolicyContext) -> Result<(), PolicyError> {
        self.check_context(ctx)?;
        let batch_size = self.batch_size as f64;
        match &mut self.state {
            StrategyState::Validation { deployed } => {
                *deployed = Some(select_validation(ctx, &self.arms, *deployed));
            }
            StrategyState::AbTest {
                alpha,
                power,
                delta,
                sigma_window,
                deployed,
                test,
                last_challenger,
                served,
                previous_chunk,
            } => {
                *previous_chunk = std::mem::take(served);
                *test = None;
                let newest = ctx.newest();
                match *deployed {
                    None => *deployed = Some(newest),
                    Some(incumbent) if incumbent != newest && *last_challenger != Some(newest) => {
                        *last_challenger = Some(newest);
                        let history: Vec<f64> = previous_chunk
                            .iter()
                            .filter(|(m, _)| *m == incumbent)
                            .map(|&(_, x)| x)
                            .collect();
                        // Per-batch spread scaled to a per-example spread, so that
                        // the required size counts examples.
                        let sigma = estimate_sigma(&history, *sigma_window) * batch_size.sqrt();
                        *test = Some(AbTestState::new(
                            incumbent, newest, *alpha, *power, sigma, *delta,
                        )?);
                    }
                    Some(_) => {}
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Picks the model that serves the next batch.
    pub fn select(&mut self, ctx: &PolicyContext) -> ModelId {
        debug_assert!(self.check_context(ctx).is_ok());
        match &mut self.state {
            StrategyState::Naive => select_naive(ctx),
            StrategyState::Validation { deployed } => deployed.unwrap_or_else(|| ctx.newest()),
            StrategyState::AbTest { deployed, .. } => deployed.unwrap_or_else(|| ctx.newest()),
            StrategyState::EpsilonGreedy {
                epsilon0,
                decay,
                epsilon,
            } => {
                *epsilon = epsilon_decay(*epsilon0, *decay, ctx.global_batch - 1);
                select_epsilon_greedy(ctx, &self.arms, *epsilon, &mut self.rng)
            }
            StrategyState::Ucb { c } => select_ucb(ctx, &self.arms, *c),
            StrategyState::Thompson => thompson_sample(ctx, &self.arms, &mut self.rng),
        }
    }

    /// The (incumbent, challenger) pair to score offline on the current batch,
    /// while an A/B test is collecting.
    pub fn shadow_pair(&self) -> Option<(ModelId, ModelId)> {
        match &self.state {
            StrategyState::AbTest { test: Some(t), .. } => Some((t.incumbent, t.challenger)),
            _ => None,
        }
    }

    /// Feeds both models' metrics on one batch into the running A/B test.
    pub fn observe_shadow(
        &mut self,
        incumbent_metric: f64,
        challenger_metric: f64,
        batch_len: u64,
    ) -> Option<AbDecision> {
        let StrategyState::AbTest { deployed, test, .. } = &mut self.state else {
            return None;
        };
        let state = test.as_mut()?;
        match ab_step(state, incumbent_metric, challenger_metric, batch_len) {
            AbStep::ContinueCollecting => None,
            AbStep::Decision(d) => {
                *deployed = Some(d.winner);
                *test = None;
                Some(d)
            }
        }
    }

    /// Records the served batch for the arm that served it.
    pub fn observe(&mut self, selected: ModelId, metric: f64, reward: f64) {
        self.arms[selected.0].record(metric, reward);
        if let StrategyState::AbTest { served, .. } = &mut self.state {
            served.push((selected, metric));
        }
    }

    /// An A/B test still collecting at the chunk boundary is abandoned; the
    /// incumbent stays deployed.
    pub fn end_chunk(&mut self) {
        if let StrategyState::AbTest { test, .. } = &mut self.state {
            *test = None;
        }
    }

    pub fn snapshot(&self) -> PolicySnapshot<'_> {
        PolicySnapshot {
            strategy: &self.state,
            arms: &self.arms,
        }
    }

    /// First 16 hex digits of the SHA-256 of the JSON snapshot.
    pub fn snapshot_digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.snapshot()).expect("snapshot serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(n: usize, t: u64, chunk: usize) -> PolicyContext {
        PolicyContext::new((0..n).map(ModelId).collect(), t, chunk, None).unwrap()
    }

    #[test]
    fn context_validation() {
        assert!(PolicyContext::new(vec![], 1, 0, None).is_err());
        assert!(PolicyContext::new(vec![ModelId(1), ModelId(1)], 1, 0, None).is_err());
        assert!(PolicyContext::new(vec![ModelId(2), ModelId(1)], 1, 0, None).is_err());
        assert!(PolicyContext::new(vec![ModelId(0)], 0, 0, None).is_err());
    }

    #[test]
    fn registration_must_be_ordered() {
        let mut p = Policy::new(&Strategy::Naive, &RewardSpec::default(), 0, 10);
        assert!(p.register_model(ModelId(1), 0.5).is_err());
        p.register_model(ModelId(0), 0.5).unwrap();
        assert_eq!(p.arms()[0].q_value, 1.0);
    }

    #[test]
    fn validation_keeps_model_zero_when_never_beaten() {
        let mut p = Policy::new(&Strategy::Validation, &RewardSpec::default(), 0, 10);
        p.register_model(ModelId(0), 0.9).unwrap();
        let mut t = 1;
        for chunk in 1..8 {
            if chunk > 1 {
                p.register_model(ModelId(chunk - 1), 0.5).unwrap();
            }
            let c = ctx(chunk, t, chunk);
            p.begin_chunk(&c).unwrap();
            for _ in 0..5 {
                assert_eq!(p.select(&c), ModelId(0));
                p.observe(ModelId(0), 0.4, 0.0);
                t += 1;
            }
        }
    }

    #[test]
    fn ab_test_promotes_clear_winner() {
        let strat = Strategy::AbTest {
            alpha: 0.05,
            power: 0.8,
            delta: 0.05,
            sigma_window: 10,
        };
        let mut p = Policy::new(&strat, &RewardSpec::default(), 0, 10);
        p.register_model(ModelId(0), 0.5).unwrap();
        let c1 = ctx(1, 1, 1);
        p.begin_chunk(&c1).unwrap();
        for (i, m) in [0.50, 0.52, 0.48, 0.51].into_iter().enumerate() {
            assert_eq!(p.select(&c1), ModelId(0));
            assert!(p.shadow_pair().is_none());
            p.observe(ModelId(0), m, (i % 2) as f64);
        }
        p.end_chunk();
        p.register_model(ModelId(1), 0.5).unwrap();
        let c2 = ctx(2, 5, 2);
        p.begin_chunk(&c2).unwrap();
        assert_eq!(p.shadow_pair(), Some((ModelId(0), ModelId(1))));
        let mut decided = None;
        for _ in 0..100 {
            assert_eq!(p.select(&c2), decided.unwrap_or(ModelId(0)));
            let served = p.select(&c2);
            p.observe(served, 0.5, 0.0);
            if p.shadow_pair().is_some() {
                if let Some(d) = p.observe_shadow(0.5, 0.7, 10) {
                    decided = Some(d.winner);
                }
            }
        }
        assert_eq!(decided, Some(ModelId(1)));
        assert_eq!(p.select(&c2), ModelId(1));
    }

    #[test]
    fn digest_changes_with_state() {
        let mut p = Policy::new(&Strategy::Ucb { c: 0.1 }, &RewardSpec::default(), 0, 10);
        p.register_model(ModelId(0), 0.5).unwrap();
        let before = p.snapshot_digest();
        assert_eq!(before.len(), 16);
        p.observe(ModelId(0), 0.3, 0.0);
        assert_ne!(before, p.snapshot_digest());
    }

    #[test]
    fn strategy_json_defaults() {
        let s: Strategy = serde_json::from_str(r#"{"kind":"ab_test"}"#).unwrap();
        assert_eq!(s, Strategy::ab_test());
        let s: Strategy =
            serde_json::from_str(r#"{"kind":"epsilon_greedy","epsilon":0.3}"#).unwrap();
        assert_eq!(
            s,
            Strategy::EpsilonGreedy {
                epsilon: 0.3,
                decay: 0.0
            }
        );
        assert!(serde_json::from_str::<Strategy>(r#"{"kind":"ucb","c":1,"eps":2}"#).is_err());
        assert!(serde_json::from_str::<Strategy>(r#"{"kind":"naive","eps":2}"#).is_err());
    }
}
