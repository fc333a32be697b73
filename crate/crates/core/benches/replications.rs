use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use synthcause_core::data::Standardizer;
use synthcause_core::dgp::{self, Regime};
use synthcause_core::diagnostics::dcr_matrix;
use synthcause_core::parallel::Execution;
use synthcause_core::simengine::{build_reference, run_replications_at, Environment, SimConfig};

const MODES: [(&str, Execution); 2] = [("serial", Execution::Serial), ("parallel", Execution::Parallel)];

fn replications(c: &mut Criterion) {
    let cfg = SimConfig {
        environment: Environment::DgpTruth {
            regime: Regime::Observational,
        },
        reference_size: 1000,
        rep_sizes: vec![500],
        reps: 64,
        truth_mc_size: 100_000,
        seed: 5,
        ..Default::default()
    };
    let reference = build_reference(&cfg, Execution::Parallel).expect("reference");
    let mut group = c.benchmark_group("replications");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, cfg.reps), &exec, |b, &exec| {
            b.iter(|| run_replications_at(&cfg, &reference, 500, exec).expect("replications"))
        });
    }
    group.finish();
}

fn truth(c: &mut Criterion) {
    let mut group = c.benchmark_group("true_ate");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 200_000), &exec, |b, &exec| {
            b.iter(|| dgp::true_ate_with(200_000, 3, exec).expect("truth"))
        });
    }
    group.finish();
}

fn dcr(c: &mut Criterion) {
    let real = dgp::sample_covariate_matrix(2000, 1);
    let syn = dgp::sample_covariate_matrix(2000, 2);
    let std = Standardizer::fit_matrix(&real, &dgp::schema().covariate_kinds());
    let mut group = c.benchmark_group("dcr");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 2000), &exec, |b, &exec| {
            b.iter(|| dcr_matrix(&real, &syn, &std, exec).expect("dcr"))
        });
    }
    group.finish();
}

criterion_group!(benches, replications, truth, dcr);
criterion_main!(benches);
