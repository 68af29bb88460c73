use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nfloc_bench::fixture;
use nfloc_core::blockage::{detect_heuristic, BlockageCost, HeuristicOptions, MaskHypothesis};
use nfloc_core::estimator::{compute_crb, localize, LocalizeOptions};

fn blockage(c: &mut Criterion) {
    let r = fixture(20.0, 6, 10, 1);
    let cost = BlockageCost::new(&r.observations, &r.truth, &r.model, 0).unwrap();
    let h = MaskHypothesis::run(25, 6, 10);
    c.bench_function("blockage_cost_eval", |b| b.iter(|| cost.eval(black_box(&h))));
    c.bench_function("blockage_cost_precompute", |b| {
        b.iter(|| BlockageCost::new(&r.observations, black_box(&r.truth), &r.model, 0).unwrap())
    });
    c.bench_function("detect_heuristic", |b| {
        b.iter(|| detect_heuristic(&r.observations, black_box(&r.truth), &r.model, 0, HeuristicOptions::default()).unwrap())
    });
}

fn estimation(c: &mut Criterion) {
    let r = fixture(20.0, 0, 0, 2);
    let sigma2 = r.model.config.noise_variance();
    let mut g = c.benchmark_group("estimation");
    g.sample_size(10);
    g.bench_function("localize", |b| {
        b.iter(|| localize(black_box(&r.observations), &r.model, 1, &LocalizeOptions::default()).unwrap())
    });
    g.bench_function("crb", |b| b.iter(|| compute_crb(black_box(&r.truth), &r.model, sigma2).unwrap()));
    g.finish();
}

criterion_group!(benches, blockage, estimation);
criterion_main!(benches);
