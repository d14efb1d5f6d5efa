use deploysim::policies::{
    epsilon_decay, required_sample_size, thompson_update, ucb_bonus, NormalGammaParams, Policy,
    PolicyContext, Strategy,
};
use deploysim::rewards::RewardSpec;
use deploysim::types::ModelId;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Closed-form Normal-Gamma posterior after observing all of `xs` at once.
fn batch_posterior(p: NormalGammaParams, xs: &[f64]) -> NormalGammaParams {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let kappa = p.kappa + n;
    NormalGammaParams {
        mu: (p.kappa * p.mu + n * mean) / kappa,
        kappa,
        alpha: p.alpha + n / 2.0,
        beta: p.beta + 0.5 * ss + p.kappa * n * (mean - p.mu).powi(2) / (2.0 * kappa),
    }
}

proptest! {
    #[test]
    fn sequential_updates_equal_batch_update(
        xs in prop::collection::vec(0.0f64..1.0, 1..50),
        mu in 0.0f64..1.0,
        kappa in 0.1f64..5.0,
        alpha in 0.6f64..5.0,
        beta in 0.1f64..5.0,
    ) {
        let prior = NormalGammaParams { mu, kappa, alpha, beta };
        let seq = xs.iter().fold(prior, |p, &x| thompson_update(p, x));
        let batch = batch_posterior(prior, &xs);
        prop_assert!((seq.mu - batch.mu).abs() < 1e-10);
        prop_assert!((seq.kappa - batch.kappa).abs() < 1e-10);
        prop_assert!((seq.alpha - batch.alpha).abs() < 1e-10);
        prop_assert!((seq.beta - batch.beta).abs() < 1e-10);
    }

    #[test]
    fn sample_size_monotone(
        a1 in 0.01f64..0.5, a2 in 0.01f64..0.5,
        p1 in 0.5f64..0.99, p2 in 0.5f64..0.99,
        s1 in 0.01f64..1.0, s2 in 0.01f64..1.0,
        d1 in 0.01f64..0.5, d2 in 0.01f64..0.5,
    ) {
        let n = |a, p, s, d| required_sample_size(a, p, s, d).unwrap();
        let (a_lo, a_hi) = (a1.min(a2), a1.max(a2));
        let (p_lo, p_hi) = (p1.min(p2), p1.max(p2));
        let (s_lo, s_hi) = (s1.min(s2), s1.max(s2));
        let (d_lo, d_hi) = (d1.min(d2), d1.max(d2));
        prop_assert!(n(a_lo, 0.8, 0.1, 0.05) >= n(a_hi, 0.8, 0.1, 0.05));
        prop_assert!(n(0.05, p_hi, 0.1, 0.05) >= n(0.05, p_lo, 0.1, 0.05));
        prop_assert!(n(0.05, 0.8, s_hi, 0.05) >= n(0.05, 0.8, s_lo, 0.05));
        prop_assert!(n(0.05, 0.8, 0.1, d_lo) >= n(0.05, 0.8, 0.1, d_hi));
        prop_assert!(n(a_lo, p_lo, s_lo, d_lo) >= 1);
    }

    #[test]
    fn epsilon_decay_never_increases(e0 in 0.0f64..=1.0, lambda in 0.0f64..2.0, t in 0u64..10_000) {
        let now = epsilon_decay(e0, lambda, t);
        prop_assert!(now <= e0);
        prop_assert!(epsilon_decay(e0, lambda, t + 1) <= now);
    }

    #[test]
    fn ucb_bonus_shrinks_with_pulls(c in 0.0f64..3.0, t in 2u64..10_000, n in 1u64..1000) {
        prop_assert!(ucb_bonus(c, t, n + 1) <= ucb_bonus(c, t, n));
    }
}

fn ctx(arms: usize, t: u64) -> PolicyContext {
    PolicyContext::new((0..arms).map(ModelId).collect(), t, 1, None).unwrap()
}

/// Greedy epsilon-greedy against an independent running mean of rewards.
#[test]
fn greedy_follows_reference_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seq in 0..50 {
        let arms = rng.random_range(1..6);
        let spec = RewardSpec::default();
        let mut p = Policy::new(
            &Strategy::EpsilonGreedy {
                epsilon: 0.0,
                decay: 0.0,
            },
            &spec,
            seq,
            10,
        );
        for a in 0..arms {
            p.register_model(ModelId(a), 0.5).unwrap();
        }
        let mut q = vec![spec.r_pos; arms];
        let mut n = vec![0.0; arms];
        for t in 1..=60 {
            let chosen = p.select(&ctx(arms, t));
            let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let expected = q.iter().position(|&v| v == best).unwrap();
            assert_eq!(chosen.0, expected, "sequence {seq}, step {t}");
            let r = if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 };
            p.observe(chosen, rng.random(), r);
            n[expected] += 1.0;
            q[expected] += (r - q[expected]) / n[expected];
        }
    }
}

#[test]
fn thompson_posterior_concentrates() {
    let mut p = NormalGammaParams::default();
    for _ in 0..1000 {
        p = thompson_update(p, 0.7);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inside = (0..10_000)
        .filter(|_| (p.sample(&mut rng) - 0.7).abs() <= 0.05)
        .count();
    assert!(inside >= 9_900, "{inside}");
}
