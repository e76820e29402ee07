use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qsmooth_bench::{identity_scenario, record};
use qsmooth_core::model::BOB;
use qsmooth_core::simulate::DiscreteOracle;
use qsmooth_core::SmoothingProblem;
use std::hint::black_box;

fn covariance_propagation(c: &mut Criterion) {
    let (model, prior) = identity_scenario(1.0);
    let problem = SmoothingProblem::quantum(&model);
    c.bench_function("covariance_path 5000 steps", |b| {
        b.iter(|| problem.covariance_path(black_box(&prior.cov), 5000, 1e-3).unwrap())
    });
}

fn estimation(c: &mut Criterion) {
    let (model, prior) = identity_scenario(1.0);
    let problem = SmoothingProblem::quantum(&model);
    let rec = record(&model, &prior, 1e-3, 5.0);
    c.bench_function("run_estimation 5000 steps", |b| {
        b.iter(|| problem.run_estimation(black_box(&prior), black_box(&rec)).unwrap())
    });
}

fn oracle(c: &mut Criterion) {
    let (model, prior) = identity_scenario(1.0);
    let mut group = c.benchmark_group("discrete_oracle");
    group.sample_size(10);
    for steps in [100usize, 400] {
        let dt = 1.0 / steps as f64;
        let rec = record(&model, &prior, dt, 1.0);
        group.bench_with_input(BenchmarkId::new("build", steps), &steps, |b, &n| {
            b.iter(|| DiscreteOracle::new(model.system(), &prior, &BOB, n, dt).unwrap())
        });
        let oracle = DiscreteOracle::new(model.system(), &prior, &BOB, steps, dt).unwrap();
        group.bench_with_input(BenchmarkId::new("posterior", steps), &steps, |b, _| {
            b.iter(|| oracle.posterior(black_box(&rec)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, covariance_propagation, estimation, oracle);
criterion_main!(benches);
