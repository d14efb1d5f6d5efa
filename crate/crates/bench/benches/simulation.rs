use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use deploysim::environment::{prepare_stream, simulate, SyntheticScenario};
use deploysim::{ChunkPlan, ExperimentConfig, MetricKind, ScorerSource, Strategy};

fn config(strategy: Strategy) -> ExperimentConfig {
    ExperimentConfig {
        chunk_plan: ChunkPlan {
            num_chunks: 8,
            batch_size: 300,
            eval_start_chunk: 2,
        },
        metric: MetricKind::PrAuc,
        policy_spec: strategy.into(),
        seed: 1,
        scorer_source: ScorerSource::Synthetic {
            scenario: SyntheticScenario::fraud_like(),
        },
        validation_fraction: 0.2,
    }
}

fn policy_loop(c: &mut Criterion) {
    let stream = prepare_stream(&config(Strategy::Naive)).unwrap();
    let mut group = c.benchmark_group("simulate");
    for s in [
        Strategy::Naive,
        Strategy::ab_test(),
        Strategy::EpsilonGreedy {
            epsilon: 0.3,
            decay: 0.0,
        },
        Strategy::Ucb { c: 1.0 },
        Strategy::thompson(),
    ] {
        let cfg = config(s);
        group.bench_function(s.name(), |b| {
            b.iter(|| simulate(black_box(&cfg), &stream).unwrap())
        });
    }
    group.finish();
}

fn stream_preparation(c: &mut Criterion) {
    let cfg = config(Strategy::Naive);
    let mut group = c.benchmark_group("prepare_stream");
    group.sample_size(10);
    group.bench_function("fraud_like", |b| {
        b.iter(|| prepare_stream(black_box(&cfg)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, policy_loop, stream_preparation);
criterion_main!(benches);
