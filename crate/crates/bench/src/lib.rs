//! Shared fixtures for the criterion benches in `benches/`.

use std::sync::Arc;

use quasilin_core::optimize::{TruthProfile, DEFAULT_FLOOR, GAMMA_NODES};
use quasilin_core::solver2d::boundary_data;
use quasilin_core::{BoundaryTrace, DirichletSystem, DiskMesh, GammaGrid, LinearSolver, MatrixField};

/// Quadratic test coefficient on the 2D parameter interval.
pub fn quadratic_gamma() -> GammaGrid {
    GammaGrid::from_fn(-0.2, 1.8, GAMMA_NODES, DEFAULT_FLOOR, |s| {
        TruthProfile::Quadratic.eval(s)
    })
    .expect("valid coefficient")
}

/// Non-smooth 1D test coefficient on `[0, 1]`.
pub fn nonsmooth_gamma() -> GammaGrid {
    GammaGrid::from_fn(0.0, 1.0, GAMMA_NODES, DEFAULT_FLOOR, |s| {
        TruthProfile::Nonsmooth.eval(s)
    })
    .expect("valid coefficient")
}

/// Isotropic disk system at the given refinement with its `g_k` boundary data.
pub fn disk(n_refine: usize, solver: LinearSolver, k: f64) -> (DirichletSystem, BoundaryTrace) {
    let mesh = Arc::new(DiskMesh::build(n_refine));
    let sys = DirichletSystem::new(mesh.clone(), &MatrixField::identity(), solver).expect("valid system");
    (sys, boundary_data(mesh, k))
}
