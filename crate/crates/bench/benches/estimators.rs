use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use diffscore::kernel::KdeModel;
use diffscore::oracle::NoisyDensityOracle;
use diffscore::risk::{risk, RiskOptions};
use diffscore::sampler::{reverse_sample, DriftMode, TimeGrid};
use diffscore_bench::{dataset, fitted, smooth_density, ALPHA};

fn oracle(c: &mut Criterion) {
    let o = NoisyDensityOracle::new(smooth_density());
    let mut g = c.benchmark_group("oracle");
    for t in [1e-5, 1e-2, 4.0] {
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| b.iter(|| o.p_psi_s(black_box(0.3), t).unwrap()));
    }
    g.finish();
}

fn kernel(c: &mut Criterion) {
    let mut g = c.benchmark_group("kde_eval");
    for n in [1 << 10, 1 << 14] {
        let kde = KdeModel::fit(&dataset(n), ALPHA, 3.0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &kde, |b, k| b.iter(|| k.eval(black_box(0.3), 1).unwrap()));
    }
    g.finish();
}

fn score(c: &mut Criterion) {
    let fit = fitted(4096);
    let mut g = c.benchmark_group("score_eval");
    for t in [1e-5, 1e-2, 4.0] {
        let sl = fit.slice(t);
        g.bench_with_input(BenchmarkId::from_parameter(t), &sl, |b, s| b.iter(|| s.eval(black_box(0.3))));
    }
    g.finish();
}

fn risk_quadrature(c: &mut Criterion) {
    let f = smooth_density();
    let o = NoisyDensityOracle::new(f.clone());
    let fit = fitted(4096);
    let mut g = c.benchmark_group("risk");
    g.sample_size(10);
    for t in [1e-5, 1e-2] {
        let (sl, truth) = (fit.slice(t), o.at(t));
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, _| {
            b.iter(|| risk(|x| sl.eval(x), &truth, f.envelope(), &RiskOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn sampler(c: &mut Criterion) {
    let fit = fitted(1024);
    let grid = TimeGrid::default_grid();
    let mut g = c.benchmark_group("sampler");
    g.sample_size(10);
    g.bench_function("m1000", |b| b.iter(|| reverse_sample(&fit, &grid, 1000, 7, DriftMode::Memoized).unwrap()));
    g.finish();
}

criterion_group!(benches, oracle, kernel, score, risk_quadrature, sampler);
criterion_main!(benches);
