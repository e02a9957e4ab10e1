use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nppq::fpi::{balance_map, PaddedLattice};
use nppq::inversion::{invert_joint, invert_marginal, plan_scheme};
use nppq::{MemoryLimit, ModelParams, PgfEvaluator, SchemeOptions, C64};

fn balance(c: &mut Criterion) {
    let model = ModelParams::from_fractions(0.75, &[1.0, 1.0, 1.0], 1, 1.0).unwrap();
    let lattice = PaddedLattice::delta(3, 40);
    c.bench_function("balance_map K=3 N=40", |b| {
        b.iter(|| balance_map(black_box(&lattice), &model).unwrap())
    });
}

fn marginal(c: &mut Criterion) {
    let model = ModelParams::new(1, 1.0, vec![0.9]).unwrap();
    let scheme = plan_scheme(&model, 200, &SchemeOptions::default()).unwrap();
    let geometric = |z: C64| (1.0 - 0.9) / (1.0 - 0.9 * z);
    c.bench_function("invert_marginal geometric N=200", |b| {
        b.iter(|| invert_marginal(geometric, black_box(&scheme), 200).unwrap())
    });
}

fn joint(c: &mut Criterion) {
    let model = ModelParams::from_fractions(0.9, &[1.0, 2.0, 3.0], 1, 1.0).unwrap();
    let scheme = plan_scheme(&model, 30, &SchemeOptions::default()).unwrap();
    let pgf = PgfEvaluator::new(&model);
    let mut group = c.benchmark_group("invert_joint");
    group.sample_size(10);
    group.bench_function("K=3 N=30", |b| {
        b.iter(|| invert_joint(&pgf, black_box(&scheme), 30, MemoryLimit::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, balance, marginal, joint);
criterion_main!(benches);
