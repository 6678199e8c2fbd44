use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dcstat::drivers::{alg1_run, alg2_run, alg3_run};
use dcstat::problems::{build_problem, ProblemSpec};
use dcstat::selectors::covering::cover_ball;
use dcstat::selectors::SelectorSpec;
use dcstat::subsolver::{solve, Subproblem, Subsolver};
use dcstat::{ConvexG, Quadratic, SolverConfig, Vector};
use nalgebra::DMatrix;

fn spd(n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5);
    a.transpose() * &a + DMatrix::identity(n, n)
}

fn subsolver(c: &mut Criterion) {
    let mut group = c.benchmark_group("subsolver");
    for n in [5usize, 20, 50] {
        let q = Quadratic::new(spd(n), Vector::from_element(n, 0.1), 0.0).unwrap();
        let g = ConvexG::smooth_only(Arc::new(q));
        let y = Vector::from_fn(n, |i, _| (i as f64).sin());
        let anchor = Vector::zeros(n);
        let cached = Subsolver::new(&g, 1.0, 1e-10, 10_000);
        group.bench_with_input(BenchmarkId::new("closed_form", n), &n, |b, _| {
            b.iter(|| cached.solve(black_box(&y), &anchor).unwrap())
        });
        let sp = Subproblem::new(&g, y.clone(), anchor.clone(), 1.0);
        group.bench_with_input(BenchmarkId::new("iterative", n), &n, |b, _| {
            b.iter(|| solve(black_box(&sp), 1e-10, 10_000).unwrap())
        });
    }
    group.finish();
}

fn drivers(c: &mut Criterion) {
    let mut group = c.benchmark_group("drivers");
    let p2 = build_problem(&ProblemSpec::p2(4, 3, 0.5, 42)).unwrap();
    let x0 = Vector::from_element(4, 3.0);
    let cfg = SolverConfig::default();
    group.bench_function("alg1_full_active_p2", |b| {
        b.iter(|| alg1_run(&p2, black_box(&x0), &SelectorSpec::FullActive, &cfg).unwrap())
    });
    group.bench_function("alg1_update1_p2", |b| {
        b.iter(|| alg1_run(&p2, black_box(&x0), &SelectorSpec::Update1, &cfg).unwrap())
    });
    group.bench_function("alg2_p2", |b| b.iter(|| alg2_run(&p2, black_box(&x0), &cfg).unwrap()));
    let p3 = build_problem(&ProblemSpec::p3(1.0)).unwrap();
    let x3 = Vector::from_element(1, 0.8);
    group.bench_function("alg3_p3", |b| b.iter(|| alg3_run(&p3, black_box(&x3), &cfg).unwrap()));
    group.finish();
}

fn covering(c: &mut Criterion) {
    let mut group = c.benchmark_group("cover_ball");
    for dim in [1usize, 2, 3] {
        let center = Vector::zeros(dim);
        group.bench_with_input(BenchmarkId::from_parameter(dim), &dim, |b, _| {
            b.iter(|| cover_ball(black_box(&center), 1.0, 0.25).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, subsolver, drivers, covering);
criterion_main!(benches);
