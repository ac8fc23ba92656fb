use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use warpfit::bayes::{find_modes, run_chains, ChainConfig, PriorSpec};
use warpfit::diffeo::{BasisCoefficients, Warp};
use warpfit::estimate::{fit_mle, FitConfig, SignMode};
use warpfit::simbench::SimId;
use warpfit::template::TemplateSpec;
use warpfit_bench::{beta, sim_data};

fn warp(c: &mut Criterion) {
    let mut group = c.benchmark_group("warp");
    for p in [5, 10, 20] {
        let w = Warp::new(BasisCoefficients::new(beta(p)).unwrap());
        group.bench_with_input(BenchmarkId::new("value", p), &w, |b, w| b.iter(|| w.value(black_box(0.37))));
        group.bench_with_input(BenchmarkId::new("grad", p), &w, |b, w| b.iter(|| w.grad(black_box(0.37))));
        group.bench_with_input(BenchmarkId::new("inverse", p), &w, |b, w| {
            b.iter(|| w.inverse(black_box(0.37), 1e-12).unwrap())
        });
    }
    group.finish();
}

fn fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_mle");
    group.sample_size(10);
    for (id, m, p, n) in [(SimId::Sim1, 1, 5, 100), (SimId::Sim2, 2, 10, 300)] {
        let data = sim_data(id, n, 1);
        let spec = TemplateSpec::hermite(m);
        let cfg = FitConfig { p, m, sign: SignMode::Plus, ..FitConfig::default() };
        group.bench_function(format!("m{m}_p{p}_n{n}"), |b| b.iter(|| fit_mle(&data, &spec, &cfg).unwrap()));
    }
    group.finish();
}

fn sampler(c: &mut Criterion) {
    let mut group = c.benchmark_group("mh");
    group.sample_size(10);
    let data = sim_data(SimId::Sim2, 300, 2);
    let spec = TemplateSpec::hermite(2);
    let cfg = FitConfig { p: 10, m: 2, sign: SignMode::Plus, ..FitConfig::default() };
    let prior = PriorSpec::default();
    let modes = find_modes(&data, &spec, &cfg, &prior, 10).unwrap();
    let chains = ChainConfig { n_chains: 4, n_iter: 2000, ..ChainConfig::default() };
    group.bench_function("sim2_p10_4x2000", |b| {
        b.iter(|| run_chains(&data, &spec, 10, &modes, &chains, &prior).unwrap())
    });
    group.finish();
}

criterion_group!(benches, warp, fit, sampler);
criterion_main!(benches);
