use std::collections::HashSet;
use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use recsel_bench::{meta_rows, skewed_dataset, train_matrix};
use recsel_core::algos::{default_zoo, fit, Algorithm};
use recsel_core::learn::{fit_regressor, MaxFeatures};
use recsel_core::metrics::ndcg_at_k;
use recsel_core::preprocess::k_core_prune;
use recsel_core::{Hyperparams, RegressorSpec};

fn metrics(c: &mut Criterion) {
    let ranked: Vec<u32> = (0..20).collect();
    let relevant: HashSet<u32> = (0..200).step_by(7).collect();
    c.bench_function("ndcg_at_10", |b| b.iter(|| ndcg_at_k(black_box(&ranked), &relevant, 10)));
}

fn kcore(c: &mut Criterion) {
    let ds = skewed_dataset(2000, 1000, 0.01);
    c.bench_function("k_core_prune 2000x1000", |b| b.iter(|| k_core_prune(black_box(&ds), 5)));
}

fn als(c: &mut Criterion) {
    let train = train_matrix(&skewed_dataset(500, 300, 0.05));
    let spec = default_zoo()
        .into_iter()
        .find(|s| s.id.algorithm == Algorithm::ImplicitALS)
        .unwrap();
    let mut g = c.benchmark_group("als");
    g.sample_size(10);
    g.bench_function("fit 32 factors 500x300", |b| {
        b.iter(|| fit(&spec, black_box(&train), Duration::from_secs(60), 1).unwrap())
    });
    g.finish();
}

fn forest(c: &mut Criterion) {
    let (x, y) = meta_rows(24);
    let spec = RegressorSpec::new(
        Hyperparams::RandomForest {
            trees: 100,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
        },
        0,
    );
    c.bench_function("forest fit 100 trees x 24 rows", |b| {
        b.iter(|| fit_regressor(&spec, black_box(&x), &y).unwrap())
    });
}

criterion_group!(benches, metrics, kcore, als, forest);
criterion_main!(benches);
