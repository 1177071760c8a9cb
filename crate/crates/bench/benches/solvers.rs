use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use quasilin_bench::{disk, nonsmooth_gamma, quadratic_gamma};
use quasilin_core::adjoint::{evaluate_2d, gradient_1d, GradientQuadrature};
use quasilin_core::solver1d::{neumann_exact, solve_forward_exact, solve_forward_fd, uniform_grid};
use quasilin_core::solver2d::solve_forward_kirchhoff;
use quasilin_core::stability::{holder_sweep, monte_carlo_inequality, Exponent};
use quasilin_core::{BoundaryMask, Coefficient1D, LinearSolver};

fn forward_1d(c: &mut Criterion) {
    let g = nonsmooth_gamma();
    let a = Coefficient1D::constant(1.0).unwrap();
    let grid = uniform_grid(256);
    let mut group = c.benchmark_group("forward_1d");
    group.bench_function("exact_256", |b| {
        b.iter(|| solve_forward_exact(&g, &a, black_box(0.8), &grid).unwrap())
    });
    group.bench_function("fd_picard_256", |b| {
        b.iter(|| solve_forward_fd(&g, &a, black_box(0.8), 256).unwrap())
    });
    group.finish();
}

fn forward_2d(c: &mut Criterion) {
    let g = quadratic_gamma();
    let mut group = c.benchmark_group("kirchhoff_2d");
    for r in [2, 3, 4] {
        for (name, solver) in [("cholesky", LinearSolver::Cholesky), ("cg", LinearSolver::cg())] {
            let (sys, bc) = disk(r, solver, 1.5);
            group.bench_with_input(BenchmarkId::new(name, r), &r, |b, _| {
                b.iter(|| solve_forward_kirchhoff(&sys, &g, &bc).unwrap())
            });
        }
    }
    group.finish();
}

fn gradients(c: &mut Criterion) {
    let truth = quadratic_gamma();
    let guess = truth
        .with_values(truth.nodes().iter().map(|s| 0.5 * s + 0.5).collect())
        .unwrap();
    let (sys, bc) = disk(3, LinearSolver::Cholesky, 1.5);
    let fwd = solve_forward_kirchhoff(&sys, &truth, &bc).unwrap();
    let data = sys.conormal_trace(&fwd.v).unwrap();
    let mask = BoundaryMask::full();
    c.bench_function("adjoint_gradient_2d_r3", |b| {
        b.iter(|| evaluate_2d(&sys, &guess, &bc, &data, &mask, GradientQuadrature::Consistent).unwrap())
    });

    let g1 = nonsmooth_gamma();
    let a = Coefficient1D::constant(1.0).unwrap();
    let lambdas: Vec<f64> = (1..=100).map(|k| k as f64 / 100.0).collect();
    let v: Vec<f64> = lambdas.iter().map(|&l| neumann_exact(&g1, &a, l).unwrap()).collect();
    let guess1 = g1
        .with_values(g1.nodes().iter().map(|s| 0.5 - 0.25 * s).collect())
        .unwrap();
    c.bench_function("gradient_1d_100", |b| {
        b.iter(|| gradient_1d(&guess1, &a, &lambdas, &v).unwrap())
    });
}

fn stability(c: &mut Criterion) {
    let mut group = c.benchmark_group("stability");
    group.sample_size(10);
    group.bench_function("inequality_mc_1000", |b| {
        b.iter(|| monte_carlo_inequality(2.0, 1000, 3).unwrap())
    });
    let p = Exponent::new(2.0).unwrap();
    let grid: Vec<f64> = (0..8).map(|i| 1e-4 * 2f64.powi(i)).collect();
    group.bench_function("holder_sweep_8", |b| b.iter(|| holder_sweep(p, 1.0, &grid).unwrap()));
    group.finish();
}

criterion_group!(benches, forward_1d, forward_2d, gradients, stability);
criterion_main!(benches);
