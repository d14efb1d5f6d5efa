//! Stateless selection rules. Each takes the arm table indexed by model index
//! and only ever considers `ctx.available_models`. Ties go to the lowest index.

use rand::Rng;

use super::arms::ArmState;
use super::PolicyContext;
use crate::types::ModelId;

/// First maximizer in `available` order, which is increasing model index.
fn argmax_by<F: Fn(ModelId) -> f64>(available: &[ModelId], value: F) -> ModelId {
    let mut best = available[0];
    let mut best_value = value(best);
    for &m in &available[1..] {
        let v = value(m);
        if v > best_value {
            best = m;
            best_value = v;
        }
    }
    best
}

/// Always the newest model.
pub fn select_naive(ctx: &PolicyContext) -> ModelId {
    ctx.newest()
}

/// Validation gate: replace `deployed` with the newest model only on a strictly
/// better validation score. With nothing deployed yet, the newest model goes live.
pub fn select_validation(
    ctx: &PolicyContext,
    states: &[ArmState],
    deployed: Option<ModelId>,
) -> ModelId {
    let newest = ctx.newest();
    match deployed {
        Some(current) if current != newest => {
            if states[newest.0].validation_score > states[current.0].validation_score {
                newest
            } else {
                current
            }
        }
        _ => newest,
    }
}

/// Argmax of Q with probability `1 - epsilon`, otherwise a uniform draw over all
/// available arms (the greedy arm included).
pub fn select_epsilon_greedy<R: Rng + ?Sized>(
    ctx: &PolicyContext,
    states: &[ArmState],
    epsilon: f64,
    rng: &mut R,
) -> ModelId {
    let u: f64 = rng.random();
    if u < epsilon {
        ctx.available_models[rng.random_range(0..ctx.available_models.len())]
    } else {
        greedy_q(ctx, states)
    }
}

pub fn greedy_q(ctx: &PolicyContext, states: &[ArmState]) -> ModelId {
    argmax_by(&ctx.available_models, |m| states[m.0].q_value)
}

/// `epsilon0 / (1 + lambda * t)`.
pub fn epsilon_decay(epsilon0: f64, lambda: f64, t: u64) -> f64 {
    epsilon0 / (1.0 + lambda * t as f64)
}

/// `c * sqrt(ln t / n)`.
pub fn ucb_bonus(c: f64, t: u64, pulls: u64) -> f64 {
    c * ((t as f64).ln() / pulls as f64).sqrt()
}

/// Upper confidence bound on the mean metric. Unpulled arms go first.
pub fn select_ucb(ctx: &PolicyContext, states: &[ArmState], c: f64) -> ModelId {
    if let Some(&fresh) = ctx
        .available_models
        .iter()
        .find(|m| states[m.0].pull_count == 0)
    {
        return fresh;
    }
    let t = ctx.global_batch;
    argmax_by(&ctx.available_models, |m| {
        let s = &states[m.0];
        s.mean_metric + ucb_bonus(c, t, s.pull_count)
    })
}

/// One posterior draw per available arm; the largest draw wins.
pub fn thompson_sample<R: Rng + ?Sized>(
    ctx: &PolicyContext,
    states: &[ArmState],
    rng: &mut R,
) -> ModelId {
    let draws: Vec<(ModelId, f64)> = ctx
        .available_models
        .iter()
        .map(|&m| (m, states[m.0].posterior.sample(rng)))
        .collect();
    let mut best = draws[0];
    for &d in &draws[1..] {
        if d.1 > best.1 {
            best = d;
        }
    }
    best.0
}
