use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ofl_core::federation::{DataSpec, DiagnosticsFlags, NoiseSpec, SimConfig};
use ofl_core::{
    build_binary_tree, build_identity, build_toeplitz, open_channel, run_simulation,
};

fn bench_factorization_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("factorization_build");
    for steps in [256usize, 1024, 4096] {
        group.bench_with_input(BenchmarkId::new("binary_tree", steps), &steps, |b, &s| {
            b.iter(|| build_binary_tree(s).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("toeplitz", steps), &steps, |b, &s| {
            b.iter(|| build_toeplitz(s).unwrap())
        });
    }
    group.finish();
}

fn bench_validation(c: &mut Criterion) {
    let mut group = c.benchmark_group("factorization_residual");
    group.sample_size(10);
    for steps in [1024usize, 4096] {
        let tree = build_binary_tree(steps).unwrap();
        let toe = build_toeplitz(steps).unwrap();
        group.bench_with_input(BenchmarkId::new("binary_tree", steps), &tree, |b, f| {
            b.iter(|| f.residual())
        });
        group.bench_with_input(BenchmarkId::new("toeplitz", steps), &toe, |b, f| {
            b.iter(|| f.residual())
        });
    }
    group.finish();
}

fn bench_noise_channel(c: &mut Criterion) {
    let mut group = c.benchmark_group("noise_channel_full_walk");
    group.sample_size(10);
    let steps = 1024;
    let dim = 64;
    for (name, f) in [
        ("identity", build_identity(steps).unwrap()),
        ("binary_tree", build_binary_tree(steps).unwrap()),
        ("toeplitz", build_toeplitz(steps).unwrap()),
    ] {
        let f = Arc::new(f);
        group.bench_function(name, |b| {
            b.iter(|| {
                let mut ch = open_channel(Arc::clone(&f), dim, 1.0, 7, 0).unwrap();
                let mut acc = 0.0;
                for _ in 0..steps {
                    acc += ch.next_increment().unwrap()[0];
                }
                acc
            })
        });
    }
    group.finish();
}

fn bench_simulation_round(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    let cfg = SimConfig {
        n: 8,
        rounds: 32,
        tau: 4,
        dim: 32,
        eta: 0.05,
        eta_g: 1.0,
        clip_bound: 1.0,
        mechanism: "toeplitz".into(),
        budget: NoiseSpec::EpsilonDelta {
            epsilon: 2.0,
            delta: 1e-3,
        },
        master_seed: 3,
        data_spec: DataSpec::Quadratic {
            drift_magnitude: 0.0,
            drift_period: 1,
        },
        diagnostics: DiagnosticsFlags::default(),
        x0: None,
        parallel: false,
        static_regret: false,
        opt_budget: None,
    };
    let stream = cfg.build_stream().unwrap();
    group.bench_function("toeplitz_8x32x4", |b| {
        b.iter(|| run_simulation(&cfg, &stream, None).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_factorization_build,
    bench_validation,
    bench_noise_channel,
    bench_simulation_round
);
criterion_main!(benches);
