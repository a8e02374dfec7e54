//! Hot paths: tree representation, Picard solves, the gamma-norm estimator
//! and path-model regression.

use std::hint::black_box;

use bsee_core::gamma::{gamma_norm_mc, FiniteRankGammaElement};
use bsee_core::representation::martingale_representation;
use bsee_core::scenario::{self, ScenarioConfig};
use bsee_core::{RandomVector, SpaceSpec, StochasticModel, TimeGrid};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;

fn square_terminal(model: &StochasticModel) -> RandomVector {
    let n = model.steps();
    let values = (0..model.states(n)).map(|m| model.brownian(n, m).powi(2)).collect();
    RandomVector::new(model, n, 1, values).unwrap()
}

fn representation(c: &mut Criterion) {
    let mut group = c.benchmark_group("representation");
    for n in [10usize, 14, 18] {
        let model = StochasticModel::tree(TimeGrid::new(1.0, n).unwrap()).unwrap();
        let xi = square_terminal(&model);
        group.bench_with_input(BenchmarkId::new("tree", n), &n, |b, _| {
            b.iter(|| martingale_representation(&model, black_box(&xi)).unwrap())
        });
    }
    let model = StochasticModel::paths(TimeGrid::new(1.0, 16).unwrap(), 20_000, 7).unwrap();
    let xi = square_terminal(&model);
    group.bench_function("paths_20000x16", |b| b.iter(|| martingale_representation(&model, black_box(&xi)).unwrap()));
    group.finish();
}

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(20);
    for name in ["picard_sin", "picard_decay_aU", "picard_tanh_lq", "linear_flow"] {
        let sc = ScenarioConfig::from_toml_str(scenario::builtin(name).unwrap()).unwrap().build().unwrap();
        group.bench_function(name, |b| b.iter(|| scenario::solve(black_box(&sc)).unwrap()));
    }
    group.finish();
}

fn gamma_norm(c: &mut Criterion) {
    let mut group = c.benchmark_group("gamma_norm_mc");
    let g = FiniteRankGammaElement::from_columns(DMatrix::from_fn(4, 32, |i, j| ((i + 1) as f64 * 0.3 + j as f64 * 0.1).sin()))
        .unwrap();
    for q in [2.0, 4.0] {
        let space = SpaceSpec::new(4, q, 2.0).unwrap();
        group.bench_with_input(BenchmarkId::new("q", q), &q, |b, _| {
            b.iter(|| gamma_norm_mc(black_box(&g), &space, 10_000, 1).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, representation, solvers, gamma_norm);
criterion_main!(benches);
