//! Identification of a quasilinear conductivity coefficient from boundary data.

// `!(x > y)` checks also reject NaN; index loops follow the matrix formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adjoint;
pub mod coeffspace;
pub mod error;
pub mod numerics;
pub mod optimize;
pub mod solver1d;
pub mod solver2d;
pub mod sparse;
pub mod stability;

pub use adjoint::{GradientQuadrature, GradientVector, Measurement2D, MisfitState};
pub use coeffspace::{GammaGrid, GammaRecord, HatWeights, Weighting};
pub use error::{Error, Result};
pub use optimize::{IterRecord, Method, OptimConfig, Problem, Reconstruction};
pub use solver1d::{Coefficient1D, Solution1D};
pub use solver2d::{BoundaryMask, BoundaryTrace, DirichletSystem, DiskMesh, LinearSolver, MatrixField, NodalField};
