use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use mabnet_bench::{four_megabit_network, small_mc};
use mabnet_core::apt::{optimize_cache, optimize_eta};
use mabnet_core::association::association_masses;
use mabnet_core::coverage::{coverage, laplace_argument, laplace_interference};
use mabnet_core::montecarlo::{mc_coverage, sample_realization};
use mabnet_core::{CaseCoupling, DistanceMode, LinkClass, Network, Serving};

const MODE: DistanceMode = DistanceMode::Thinned;

fn analytical(c: &mut Criterion) {
    let net = Network::reference();
    c.bench_function("association_masses", |b| {
        b.iter(|| association_masses(black_box(&net), MODE).unwrap())
    });
    c.bench_function("laplace_interference", |b| {
        let serving = Serving::Access(LinkClass::SBS_LOS);
        let s = laplace_argument(&net, serving, 50.0, 10.0);
        b.iter(|| laplace_interference(black_box(&net), serving, 50.0, s).unwrap())
    });
    c.bench_function("coverage_10db", |b| {
        b.iter(|| coverage(black_box(&net), 10.0, MODE).unwrap())
    });
    c.bench_function("optimize_eta_41", |b| {
        b.iter(|| optimize_eta(black_box(&net), 10.0, 41, MODE, CaseCoupling::Matched).unwrap())
    });
    let mut group = c.benchmark_group("sweeps");
    group.sample_size(10);
    let four = four_megabit_network();
    group.bench_function("optimize_cache_step_50", |b| {
        b.iter(|| optimize_cache(black_box(&four), 0.5, 10.0, 50, MODE, CaseCoupling::Matched).unwrap())
    });
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let net = Network::reference();
    let cfg = small_mc(200);
    c.bench_function("sample_realization", |b| {
        let mut i = 0u64;
        b.iter_batched(
            || {
                i += 1;
                i
            },
            |k| sample_realization(net.sys(), &cfg, 1, k),
            BatchSize::SmallInput,
        )
    });
    let mut group = c.benchmark_group("mc");
    group.sample_size(10);
    group.bench_function("mc_coverage_200", |b| {
        b.iter(|| mc_coverage(black_box(&net), &[1.0, 10.0], &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, analytical, monte_carlo);
criterion_main!(benches);
