//! P1 finite elements on the unit disk.
//!
//! The quasilinear problem is solved through the Kirchhoff transform
//! `v = Γ(u)`: one linear Dirichlet solve for `v`, then `u = Γ⁻¹(v)` nodewise.
//! A Picard iteration on the untransformed equation is kept as an oracle.

pub mod assembly;
pub mod mesh;

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

pub use assembly::{assemble_stiffness, element_stiffness, Mat2, MatrixField};
pub use mesh::DiskMesh;

use crate::coeffspace::GammaGrid;
use crate::error::{Error, Result};
use crate::numerics::solve_cyclic_tridiagonal;
use crate::sparse::{pcg, BandedCholesky, CsrMatrix};

/// Allowed overshoot of the discrete maximum principle before it is an error.
pub const MAX_PRINCIPLE_SLACK: f64 = 1e-10;
/// Interior residual above which a field is not accepted as a discrete solution.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Boundary data `g_k(θ) = k (e^{-θ²} − 0.1)`.
pub fn dirichlet_g(k: f64, theta: f64) -> f64 {
    k * ((-theta * theta).exp() - 0.1)
}

/// Scalar field on mesh vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub mesh: Arc<DiskMesh>,
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn new(mesh: Arc<DiskMesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values for {} vertices",
                values.len(),
                mesh.n_vertices()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("field contains non-finite values".into()));
        }
        Ok(Self { mesh, values })
    }

    pub fn from_fn(mesh: Arc<DiskMesh>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = mesh.vertices.iter().map(|&p| f(p)).collect();
        Self { mesh, values }
    }

    /// Values at boundary vertices in loop order.
    pub fn boundary_values(&self) -> Vec<f64> {
        self.mesh.boundary.iter().map(|&i| self.values[i]).collect()
    }

    /// CSV `x,y,value` with a mesh header comment.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write_mesh_header(&mut w, &self.mesh)?;
        writeln!(w, "x,y,value")?;
        for (p, v) in self.mesh.vertices.iter().zip(&self.values) {
            writeln!(w, "{:.17e},{:.17e},{v:.17e}", p[0], p[1])?;
        }
        Ok(())
    }
}

/// Values at boundary vertices together with the lumped arc quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub mesh: Arc<DiskMesh>,
    pub values: Vec<f64>,
    pub arc_weights: Vec<f64>,
}

impl BoundaryTrace {
    pub fn new(mesh: Arc<DiskMesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_boundary() {
            return Err(Error::InvalidArgument(format!(
                "trace has {} values for {} boundary vertices",
                values.len(),
                mesh.n_boundary()
            )));
        }
        let arc_weights = mesh.arc_weights();
        Ok(Self {
            mesh,
            values,
            arc_weights,
        })
    }

    /// Samples `f(θ)` at the boundary vertices.
    pub fn from_fn(mesh: Arc<DiskMesh>, f: impl Fn(f64) -> f64) -> Self {
        let values = mesh.boundary_theta.iter().map(|&t| f(t)).collect();
        let arc_weights = mesh.arc_weights();
        Self {
            mesh,
            values,
            arc_weights,
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Σ values · arc_weights`.
    pub fn integral(&self) -> f64 {
        self.values.iter().zip(&self.arc_weights).map(|(v, w)| v * w).sum()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            mesh: self.mesh.clone(),
            values,
            arc_weights: self.arc_weights.clone(),
        }
    }

    /// CSV `theta,value` with a mesh header comment.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write_mesh_header(&mut w, &self.mesh)?;
        writeln!(w, "theta,value")?;
        for (t, v) in self.mesh.boundary_theta.iter().zip(&self.values) {
            writeln!(w, "{t:.17e},{v:.17e}")?;
        }
        Ok(())
    }
}

/// Measurement subset `S` of the boundary, as a union of θ-intervals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryMask {
    /// `None` means the whole circle.
    intervals: Option<Vec<(f64, f64)>>,
}

impl BoundaryMask {
    pub fn full() -> Self {
        Self { intervals: None }
    }

    /// Closed intervals `[a, b]` of angles in `[-π, π)`.
    pub fn from_intervals(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals
            .iter()
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b))
        {
            return Err(Error::InvalidArgument("mask intervals must satisfy a ≤ b".into()));
        }
        Ok(Self {
            intervals: Some(intervals),
        })
    }

    pub fn contains(&self, theta: f64) -> bool {
        match &self.intervals {
            None => true,
            Some(iv) => iv.iter().any(|&(a, b)| a <= theta && theta <= b),
        }
    }

    pub fn flags(&self, mesh: &DiskMesh) -> Vec<bool> {
        mesh.boundary_theta.iter().map(|&t| self.contains(t)).collect()
    }
}

/// Linear solver for the reduced interior system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolver {
    /// Jacobi-preconditioned CG to the given relative residual.
    ConjugateGradient { tol: f64, max_iter: usize },
    /// Banded Cholesky, factored once per operator.
    Cholesky,
}

impl LinearSolver {
    pub fn cg() -> Self {
        LinearSolver::ConjugateGradient {
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

/// Reduced Dirichlet problem for a fixed mesh and coefficient matrix.
///
/// Holds the stiffness matrix, its interior/boundary blocks and, for the
/// direct solver, the Cholesky factor. Solves for different boundary data can
/// share one system across threads.
#[derive(Debug, Clone)]
pub struct DirichletSystem {
    mesh: Arc<DiskMesh>,
    elements: Vec<[[f64; 3]; 3]>,
    stiffness: CsrMatrix,
    interior: Vec<usize>,
    /// vertex -> position among interior unknowns
    interior_index: Vec<Option<usize>>,
    /// vertex -> position on the boundary loop
    boundary_index: Vec<Option<usize>>,
    k_ii: CsrMatrix,
    k_ib: CsrMatrix,
    solver: LinearSolver,
    factor: Option<BandedCholesky>,
}

impl DirichletSystem {
    pub fn new(mesh: Arc<DiskMesh>, a: &MatrixField, solver: LinearSolver) -> Result<Self> {
        let elements = assembly::element_matrices(&mesh, a)?;
        let stiffness = assembly::scatter(&mesh, &elements, None);
        let n = mesh.n_vertices();
        let mut boundary_index = vec![None; n];
        for (k, &b) in mesh.boundary.iter().enumerate() {
            boundary_index[b] = Some(k);
        }
        let interior: Vec<usize> = (0..n).filter(|&i| boundary_index[i].is_none()).collect();
        let mut interior_index = vec![None; n];
        for (k, &i) in interior.iter().enumerate() {
            interior_index[i] = Some(k);
        }
        let k_ii = stiffness.extract(&interior, &interior_index, interior.len());
        let k_ib = stiffness.extract(&interior, &boundary_index, mesh.n_boundary());
        let factor = match solver {
            LinearSolver::Cholesky => Some(BandedCholesky::factor(&k_ii)?),
            LinearSolver::ConjugateGradient { .. } => None,
        };
        Ok(Self {
            mesh,
            elements,
            stiffness,
            interior,
            interior_index,
            boundary_index,
            k_ii,
            k_ib,
            solver,
            factor,
        })
    }

    pub fn mesh(&self) -> &Arc<DiskMesh> {
        &self.mesh
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn solver(&self) -> LinearSolver {
        self.solver
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Per-triangle element matrices (coefficient `A` at the barycenter).
    pub fn elements(&self) -> &[[[f64; 3]; 3]] {
        &self.elements
    }

    /// Dirichlet solve with boundary data in loop order.
    pub fn solve(&self, bc: &[f64]) -> Result<NodalField> {
        self.solve_with(&self.k_ii, self.factor.as_ref(), &self.k_ib, bc, None)
    }

    fn solve_with(
        &self,
        k_ii: &CsrMatrix,
        factor: Option<&BandedCholesky>,
        k_ib: &CsrMatrix,
        bc: &[f64],
        warm: Option<&[f64]>,
    ) -> Result<NodalField> {
        if bc.len() != self.mesh.n_boundary() {
            return Err(Error::InvalidArgument(format!(
                "{} boundary values for {} boundary vertices",
                bc.len(),
                self.mesh.n_boundary()
            )));
        }
        let rhs: Vec<f64> = k_ib.mul_vec(bc).into_iter().map(|v| -v).collect();
        let x = match (factor, self.solver) {
            (Some(f), _) => f.solve(&rhs),
            (None, LinearSolver::ConjugateGradient { tol, max_iter }) => {
                let x0: Option<Vec<f64>> = warm.map(|w| self.interior.iter().map(|&i| w[i]).collect());
                pcg(k_ii, &rhs, x0.as_deref(), tol, max_iter)?.x
            }
            (None, LinearSolver::Cholesky) => BandedCholesky::factor(k_ii)?.solve(&rhs),
        };
        let mut values = vec![0.0; self.mesh.n_vertices()];
        for (k, &b) in self.mesh.boundary.iter().enumerate() {
            values[b] = bc[k];
        }
        for (k, &i) in self.interior.iter().enumerate() {
            values[i] = x[k];
        }
        Ok(NodalField {
            mesh: self.mesh.clone(),
            values,
        })
    }

    /// Solves `M_b q = r` for the boundary mass matrix on the arc-length loop.
    pub fn boundary_mass_solve(&self, r: &[f64]) -> Vec<f64> {
        let nb = self.mesh.n_boundary();
        let len: Vec<f64> = (0..nb).map(|i| self.mesh.arc_length(i)).collect();
        let lower: Vec<f64> = (0..nb).map(|i| len[(i + nb - 1) % nb] / 6.0).collect();
        let upper: Vec<f64> = (0..nb).map(|i| len[i] / 6.0).collect();
        let diag: Vec<f64> = (0..nb).map(|i| (len[(i + nb - 1) % nb] + len[i]) / 3.0).collect();
        solve_cyclic_tridiagonal(&lower, &diag, &upper, r)
    }

    /// Full stiffness residual `K · field`.
    pub fn residual(&self, field: &NodalField) -> Vec<f64> {
        self.stiffness.mul_vec(&field.values)
    }

    /// Variationally consistent conormal flux `q = M_b⁻¹ (K field)_B`.
    pub fn conormal_trace(&self, field: &NodalField) -> Result<BoundaryTrace> {
        if field.values.len() != self.mesh.n_vertices() {
            return Err(Error::InvalidArgument("field does not match the mesh".into()));
        }
        let r = self.residual(field);
        let scale = field.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let worst = self.interior.iter().map(|&i| r[i].abs()).fold(0.0f64, f64::max);
        if worst > RESIDUAL_TOLERANCE * scale {
            return Err(Error::Precondition(format!(
                "field is not a discrete solution: interior residual {worst:e}"
            )));
        }
        let rb: Vec<f64> = self.mesh.boundary.iter().map(|&b| r[b]).collect();
        BoundaryTrace::new(self.mesh.clone(), self.boundary_mass_solve(&rb))
    }

    pub fn boundary_position(&self, vertex: usize) -> Option<usize> {
        self.boundary_index[vertex]
    }

    pub fn interior_position(&self, vertex: usize) -> Option<usize> {
        self.interior_index[vertex]
    }
}

/// Dirichlet solve on a freshly assembled operator with CG.
pub fn solve_dirichlet(mesh: Arc<DiskMesh>, a: &MatrixField, g: &BoundaryTrace) -> Result<NodalField> {
    DirichletSystem::new(mesh, a, LinearSolver::cg())?.solve(&g.values)
}

/// Conormal trace on a freshly assembled operator.
pub fn conormal_trace(mesh: Arc<DiskMesh>, a: &MatrixField, field: &NodalField) -> Result<BoundaryTrace> {
    DirichletSystem::new(mesh, a, LinearSolver::cg())?.conormal_trace(field)
}

/// Result of a Kirchhoff-transform forward solve.
#[derive(Debug, Clone, PartialEq)]
pub struct KirchhoffSolution {
    pub u: NodalField,
    /// Discrete-harmonic `v = Γ(u)`.
    pub v: NodalField,
    /// Vertices whose `v` overshot the boundary range within the slack and were clamped.
    pub clamped: usize,
}

fn check_gamma_on_range(g: &GammaGrid, lo: f64, hi: f64) -> Result<()> {
    for (what, s) in [("boundary data minimum", lo), ("boundary data maximum", hi)] {
        if !(s >= g.s_lo() && s <= g.s_hi()) {
            return Err(Error::Range {
                what,
                value: s,
                lo: g.s_lo(),
                hi: g.s_hi(),
            });
        }
    }
    if g.min_value() <= 0.0 {
        return Err(Error::Precondition(format!(
            "γ must be positive, minimum nodal value is {}",
            g.min_value()
        )));
    }
    Ok(())
}

/// Solves `∇·(γ(u) A ∇u) = 0`, `u = bc` on the boundary, via `v = Γ(u)`.
pub fn solve_forward_kirchhoff(sys: &DirichletSystem, g: &GammaGrid, bc: &BoundaryTrace) -> Result<KirchhoffSolution> {
    let (lo, hi) = (bc.min(), bc.max());
    check_gamma_on_range(g, lo, hi)?;
    let vb = bc
        .values
        .iter()
        .map(|&s| g.antiderivative(s))
        .collect::<Result<Vec<_>>>()?;
    let v = sys.solve(&vb)?;
    let (vlo, vhi) = (g.antiderivative(lo)?, g.antiderivative(hi)?);
    let slack_lo = MAX_PRINCIPLE_SLACK * g.value_at(lo);
    let slack_hi = MAX_PRINCIPLE_SLACK * g.value_at(hi);
    let mut clamped = 0;
    let mut u = Vec::with_capacity(v.values.len());
    for &vi in &v.values {
        let t = if vi < vlo {
            if vlo - vi > slack_lo {
                return Err(Error::Range {
                    what: "transformed solution (maximum principle)",
                    value: vi,
                    lo: vlo,
                    hi: vhi,
                });
            }
            clamped += 1;
            vlo
        } else if vi > vhi {
            if vi - vhi > slack_hi {
                return Err(Error::Range {
                    what: "transformed solution (maximum principle)",
                    value: vi,
                    lo: vlo,
                    hi: vhi,
                });
            }
            clamped += 1;
            vhi
        } else {
            vi
        };
        u.push(g.inverse_antiderivative(t)?.clamp(lo, hi));
    }
    // boundary values are data, not reconstructions
    for (k, &b) in sys.mesh.boundary.iter().enumerate() {
        u[b] = bc.values[k];
    }
    Ok(KirchhoffSolution {
        u: NodalField {
            mesh: sys.mesh.clone(),
            values: u,
        },
        v,
        clamped,
    })
}

/// How the Picard oracle freezes the coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PicardMode {
    /// Per edge: the mean of γ between the two endpoint values. The fixed point
    /// coincides with the discrete Kirchhoff solution.
    EdgeSecant,
    /// Per triangle: γ at the barycentric value of `u`. Consistent only up to
    /// the mesh discretization error.
    Barycentric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub mode: PicardMode,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            mode: PicardMode::EdgeSecant,
            tol: 1e-12,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardSolution {
    pub u: NodalField,
    pub iterations: usize,
    /// Max-norm increments per iteration.
    pub history: Vec<f64>,
}

/// Frozen-coefficient fixed-point iteration for the quasilinear problem.
///
/// Each step assembles the stiffness with γ frozen at the previous iterate and
/// solves the Dirichlet problem directly. The start is the `γ ≡ 1` solution.
pub fn solve_forward_picard(
    sys: &DirichletSystem,
    g: &GammaGrid,
    bc: &BoundaryTrace,
    opts: PicardOptions,
) -> Result<PicardSolution> {
    check_gamma_on_range(g, bc.min(), bc.max())?;
    let mesh = &sys.mesh;
    let mut u = sys.solve(&bc.values)?.values;
    let mut history = Vec::new();
    for iter in 1..=opts.max_iter {
        let k = match opts.mode {
            PicardMode::Barycentric => {
                let scale: Vec<f64> = mesh
                    .triangles
                    .iter()
                    .map(|t| g.value_at((u[t[0]] + u[t[1]] + u[t[2]]) / 3.0))
                    .collect();
                assembly::scatter(mesh, &sys.elements, Some(&scale))
            }
            PicardMode::EdgeSecant => {
                let n = mesh.n_vertices();
                let mut triplets = Vec::with_capacity(sys.stiffness.nnz());
                for i in 0..n {
                    let (cols, vals) = sys.stiffness.row(i);
                    let mut diag = 0.0;
                    for (&j, &kij) in cols.iter().zip(vals) {
                        if j != i {
                            let w = kij * g.mean_value(u[i], u[j]);
                            triplets.push((i, j, w));
                            diag -= w;
                        }
                    }
                    triplets.push((i, i, diag));
                }
                CsrMatrix::from_triplets(n, n, triplets)
            }
        };
        let k_ii = k.extract(&sys.interior, &sys.interior_index, sys.interior.len());
        let k_ib = k.extract(&sys.interior, &sys.boundary_index, mesh.n_boundary());
        let factor = BandedCholesky::factor(&k_ii)?;
        let next = sys
            .solve_with(&k_ii, Some(&factor), &k_ib, &bc.values, Some(&u))?
            .values;
        let change = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        u = next;
        history.push(change);
        if change < opts.tol {
            return Ok(PicardSolution {
                u: NodalField {
                    mesh: mesh.clone(),
                    values: u,
                },
                iterations: iter,
                history,
            });
        }
    }
    Err(Error::Convergence {
        solver: "2D Picard",
        iterations: opts.max_iter,
        residual: *history.last().unwrap_or(&f64::NAN),
        history,
    })
}

fn write_mesh_header<W: Write>(w: &mut W, mesh: &DiskMesh) -> Result<()> {
    writeln!(w, "# n_refine={} h_max={:.17e}", mesh.n_refine, mesh.h_max)?;
    Ok(())
}

/// Writes the vertex table (`index,x,y`) and triangle table (`v0,v1,v2`).
pub fn write_mesh_csv<W1: Write, W2: Write>(mesh: &DiskMesh, mut vertices: W1, mut triangles: W2) -> Result<()> {
    write_mesh_header(&mut vertices, mesh)?;
    writeln!(vertices, "index,x,y")?;
    for (i, p) in mesh.vertices.iter().enumerate() {
        writeln!(vertices, "{i},{:.17e},{:.17e}", p[0], p[1])?;
    }
    write_mesh_header(&mut triangles, mesh)?;
    writeln!(triangles, "v0,v1,v2")?;
    for t in &mesh.triangles {
        writeln!(triangles, "{},{},{}", t[0], t[1], t[2])?;
    }
    Ok(())
}

/// `g_k` sampled on the boundary of `mesh`.
pub fn boundary_data(mesh: Arc<DiskMesh>, k: f64) -> BoundaryTrace {
    BoundaryTrace::from_fn(mesh, |t| dirichlet_g(k, t))
}

/// Linear interpolation in θ of a periodic trace onto other angles.
pub fn interpolate_periodic(theta: &[f64], values: &[f64], at: &[f64]) -> Vec<f64> {
    let n = theta.len();
    at.iter()
        .map(|&t| {
            let k = theta.partition_point(|&x| x <= t);
            let (i0, i1, t0, t1) = if k == 0 {
                (n - 1, 0, theta[n - 1] - 2.0 * PI, theta[0])
            } else if k == n {
                (n - 1, 0, theta[n - 1], theta[0] + 2.0 * PI)
            } else {
                (k - 1, k, theta[k - 1], theta[k])
            };
            let w = (t - t0) / (t1 - t0);
            values[i0] + w * (values[i1] - values[i0])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(r: usize) -> DirichletSystem {
        DirichletSystem::new(
            Arc::new(DiskMesh::build(r)),
            &MatrixField::identity(),
            LinearSolver::Cholesky,
        )
        .unwrap()
    }

    fn gamma_dagger() -> GammaGrid {
        GammaGrid::from_fn(-0.2, 1.8, 101, 1e-3, |s| 0.3 * s * s + 0.2 * s + 0.25).unwrap()
    }

    #[test]
    fn g_examples() {
        assert!((dirichlet_g(1.0, 0.0) - 0.9).abs() < 1e-15);
        assert!((dirichlet_g(2.0, 0.0) - 1.8).abs() < 1e-15);
        let end = 1.1 * ((-PI * PI).exp() - 0.1);
        assert!((dirichlet_g(1.1, -PI) - end).abs() < 1e-15);
        assert!((end + 0.109943).abs() < 1e-6);
    }

    #[test]
    fn constants_are_discrete_harmonic() {
        let mesh = Arc::new(DiskMesh::build(3));
        let g = BoundaryTrace::from_fn(mesh.clone(), |_| 1.0);
        let u = solve_dirichlet(mesh, &MatrixField::identity(), &g).unwrap();
        assert!(u.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn cg_and_cholesky_agree() {
        let mesh = Arc::new(DiskMesh::build(3));
        let g = BoundaryTrace::from_fn(mesh.clone(), |t| (2.0 * t).cos());
        let a = solve_dirichlet(mesh.clone(), &MatrixField::identity(), &g).unwrap();
        let b = system(3).solve(&g.values).unwrap();
        for (p, q) in a.values.iter().zip(&b.values) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn trace_of_constant_is_zero() {
        let sys = system(2);
        let f = NodalField::from_fn(sys.mesh().clone(), |_| 3.0);
        let q = sys.conormal_trace(&f).unwrap();
        assert!(q.values.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn trace_rejects_non_solutions() {
        let sys = system(2);
        let f = NodalField::from_fn(sys.mesh().clone(), |p| p[0] * p[0]);
        assert!(matches!(sys.conormal_trace(&f), Err(Error::Precondition(_))));
    }

    #[test]
    fn flux_is_conserved() {
        let sys = system(3);
        let bc = boundary_data(sys.mesh().clone(), 1.7);
        let v = sys.solve(&bc.values).unwrap();
        let q = sys.conormal_trace(&v).unwrap();
        assert!(q.integral().abs() <= 1e-8);
    }

    #[test]
    fn kirchhoff_with_unit_gamma_is_linear_solve() {
        let sys = system(3);
        let g = GammaGrid::constant(-2.0, 2.0, 11, 1.0, 1e-3).unwrap();
        let bc = BoundaryTrace::from_fn(sys.mesh().clone(), |t| t.sin());
        let sol = solve_forward_kirchhoff(&sys, &g, &bc).unwrap();
        let lin = sys.solve(&bc.values).unwrap();
        for ((u, v), w) in sol.u.values.iter().zip(&sol.v.values).zip(&lin.values) {
            assert!((u - w).abs() < 1e-13 && (v - w).abs() < 1e-13);
        }
    }

    #[test]
    fn scaling_gamma_keeps_u_and_scales_flux() {
        let sys = system(3);
        let g = gamma_dagger();
        let g3 = g.with_values(g.values().iter().map(|v| 3.0 * v).collect()).unwrap();
        let bc = boundary_data(sys.mesh().clone(), 1.5);
        let a = solve_forward_kirchhoff(&sys, &g, &bc).unwrap();
        let b = solve_forward_kirchhoff(&sys, &g3, &bc).unwrap();
        for (p, q) in a.u.values.iter().zip(&b.u.values) {
            assert!((p - q).abs() < 1e-12);
        }
        let qa = sys.conormal_trace(&a.v).unwrap();
        let qb = sys.conormal_trace(&b.v).unwrap();
        for (p, q) in qa.values.iter().zip(&qb.values) {
            assert!((3.0 * p - q).abs() < 1e-11);
        }
    }

    #[test]
    fn kirchhoff_respects_maximum_principle() {
        let sys = system(4);
        let g = gamma_dagger();
        for k in [1.1, 1.5, 2.0] {
            let bc = boundary_data(sys.mesh().clone(), k);
            let sol = solve_forward_kirchhoff(&sys, &g, &bc).unwrap();
            let (lo, hi) = (bc.min(), bc.max());
            assert!(sol
                .u
                .values
                .iter()
                .all(|u| *u >= lo - MAX_PRINCIPLE_SLACK && *u <= hi + MAX_PRINCIPLE_SLACK));
        }
    }

    #[test]
    fn boundary_data_outside_gamma_interval_is_rejected() {
        let sys = system(2);
        let g = GammaGrid::constant(0.0, 1.0, 11, 1.0, 1e-3).unwrap();
        let bc = boundary_data(sys.mesh().clone(), 2.0);
        assert!(matches!(
            solve_forward_kirchhoff(&sys, &g, &bc),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn picard_with_unit_gamma_converges_immediately() {
        let sys = system(3);
        let g = GammaGrid::constant(-2.0, 2.0, 11, 1.0, 1e-3).unwrap();
        let bc = BoundaryTrace::from_fn(sys.mesh().clone(), |t| t.cos());
        let p = solve_forward_picard(&sys, &g, &bc, PicardOptions::default()).unwrap();
        assert_eq!(p.iterations, 1);
    }

    #[test]
    fn picard_matches_kirchhoff() {
        let sys = system(3);
        let g = gamma_dagger();
        let bc = boundary_data(sys.mesh().clone(), 1.1);
        let k = solve_forward_kirchhoff(&sys, &g, &bc).unwrap();
        let p = solve_forward_picard(&sys, &g, &bc, PicardOptions::default()).unwrap();
        let gap =
            k.u.values
                .iter()
                .zip(&p.u.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        assert!(gap <= 1e-6, "gap {gap}");
    }

    #[test]
    fn picard_iterations_are_mesh_insensitive() {
        let g = gamma_dagger();
        let counts: Vec<usize> = (2..=4)
            .map(|r| {
                let sys = system(r);
                let bc = boundary_data(sys.mesh().clone(), 2.0);
                solve_forward_picard(&sys, &g, &bc, PicardOptions::default())
                    .unwrap()
                    .iterations
            })
            .collect();
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 3, "{counts:?}");
    }

    #[test]
    fn mask_selects_intervals() {
        let m = BoundaryMask::from_intervals(vec![(-0.5, 0.5)]).unwrap();
        assert!(m.contains(0.0) && !m.contains(1.0));
        assert!(BoundaryMask::full().contains(3.0));
        assert!(BoundaryMask::from_intervals(vec![(1.0, 0.0)]).is_err());
    }

    #[test]
    fn periodic_interpolation_wraps() {
        let theta = [-PI, -PI / 2.0, 0.0, PI / 2.0];
        let vals = [0.0, 1.0, 2.0, 3.0];
        let got = interpolate_periodic(&theta, &vals, &[-PI, 0.25 * PI, 0.75 * PI]);
        assert_eq!(got, vec![0.0, 2.5, 1.5]);
    }
}
