use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pgi_bench::Fixture;
use pgi_core::feedback::{gen_rvq_codebook, quantize_round_trip};
use pgi_core::harness::run_trial;
use pgi_core::rate::stack_user;
use pgi_core::selection::{select_dominating_paths, SlnrSolver};
use pgi_core::SystemConfig;
use std::hint::black_box;

fn slnr_solve(c: &mut Criterion) {
    let f = Fixture::default_system();
    let solver = SlnrSolver::new(&f.steering, f.noise_var).unwrap();
    let sets = f.selection.user_sets(0);
    c.bench_function("slnr_solve", |b| b.iter(|| solver.solve(0, black_box(&sets)).unwrap()));
}

fn selection(c: &mut Criterion) {
    let f = Fixture::default_system();
    c.bench_function("select_dominating_paths", |b| {
        b.iter(|| select_dominating_paths(black_box(&f.steering), f.config.path_budget, f.noise_var).unwrap())
    });
}

fn quantize(c: &mut Criterion) {
    let f = Fixture::default_system();
    let g = stack_user(&f.gains, 0);
    let mut group = c.benchmark_group("quantize_round_trip");
    for bits in [4u32, 8, 12] {
        let book = gen_rvq_codebook(g.len(), bits, 3).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(bits), &book, |b, book| {
            b.iter(|| quantize_round_trip(black_box(&g), book).unwrap())
        });
    }
    group.finish();
}

fn trial(c: &mut Criterion) {
    let cfg = SystemConfig::default();
    let mut group = c.benchmark_group("trial");
    group.sample_size(20);
    group.bench_function("default", |b| b.iter(|| run_trial(black_box(&cfg), 11).unwrap()));
    group.finish();
}

criterion_group!(benches, slnr_solve, selection, quantize, trial);
criterion_main!(benches);
