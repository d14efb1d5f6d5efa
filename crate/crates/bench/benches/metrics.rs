use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deploysim::metrics::{balanced_accuracy, pr_auc, roc_auc, ScoredBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch(n: usize) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
    let scores = labels
        .iter()
        .map(|&y| (rng.random::<f64>() * 0.8 + if y { 0.2 } else { 0.0 }).min(1.0))
        .collect();
    (scores, labels)
}

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics");
    for n in [300, 3_000, 30_000] {
        let (scores, labels) = batch(n);
        let sb = ScoredBatch::new(&scores, &labels).unwrap();
        group.bench_with_input(BenchmarkId::new("pr_auc", n), &sb, |b, sb| {
            b.iter(|| pr_auc(black_box(sb)))
        });
        group.bench_with_input(BenchmarkId::new("roc_auc", n), &sb, |b, sb| {
            b.iter(|| roc_auc(black_box(sb)))
        });
        group.bench_with_input(BenchmarkId::new("balanced_accuracy", n), &sb, |b, sb| {
            b.iter(|| balanced_accuracy(black_box(sb), 0.5))
        });
    }
    group.finish();
}

criterion_group!(benches, metrics);
criterion_main!(benches);
