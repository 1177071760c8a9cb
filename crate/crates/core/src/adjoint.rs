//! Tikhonov objective and its gradient with respect to the nodal γ values.
//!
//! In 2D the gradient comes from one extra linear solve for the adjoint state
//! `z`, whose Dirichlet data is the boundary residual. In 1D it is closed form
//! because the Neumann data is `Γ(λ)/c_a`.

use std::io::Write;

use rayon::prelude::*;

use crate::coeffspace::{GammaGrid, Weighting};
use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;
use crate::solver1d::{solve_forward_exact, Coefficient1D};
use crate::solver2d::{
    mesh::DiskMesh, solve_forward_kirchhoff, BoundaryMask, BoundaryTrace, DirichletSystem, NodalField,
};

/// Forward state and data misfit for one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct MisfitState {
    pub u: NodalField,
    /// Discrete-harmonic `Γ(u)`.
    pub v: NodalField,
    pub v_data: BoundaryTrace,
    /// `γ(u)∂_ν u − v_data` on the measured set, zero elsewhere.
    pub residual: BoundaryTrace,
    pub j0: f64,
}

/// Data and regularization parts of the objective gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub data_part: Vec<f64>,
    /// Gradient of `½|γ|²_{H¹}`.
    pub reg_part: Vec<f64>,
    /// `data_part + β · reg_part`.
    pub total: Vec<f64>,
    /// Nodes the data cannot see; their data gradient is exactly zero.
    pub uninformed: Vec<bool>,
}

/// Quadrature used to contract `∇z·A∇u` against the hat basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientQuadrature {
    /// Vertex form `Σ_v (K z)_v ∂Γ(u_v)/∂γ_k`, the exact derivative of the
    /// discrete objective.
    #[default]
    Consistent,
    /// One-point rule per triangle at the barycentric value of `u`.
    Barycentric,
}

/// `½ Σ r² w` with compensated summation.
pub fn weighted_half_square(values: &[f64], weights: &[f64]) -> f64 {
    0.5 * values
        .iter()
        .zip(weights)
        .map(|(r, w)| r * r * w)
        .collect::<CompensatedSum>()
        .value()
}

/// Forward solve, conormal trace of `Γ(u)` and masked residual.
pub fn misfit(
    sys: &DirichletSystem,
    g: &GammaGrid,
    bc: &BoundaryTrace,
    v_data: &BoundaryTrace,
    mask: &BoundaryMask,
) -> Result<MisfitState> {
    let fwd = solve_forward_kirchhoff(sys, g, bc)?;
    let q = sys.conormal_trace(&fwd.v)?;
    let flags = mask.flags(sys.mesh());
    let residual: Vec<f64> = q
        .values
        .iter()
        .zip(&v_data.values)
        .zip(&flags)
        .map(|((qi, di), &on)| if on { qi - di } else { 0.0 })
        .collect();
    let residual = q.with_values(residual);
    let j0 = weighted_half_square(&residual.values, &residual.arc_weights);
    Ok(MisfitState {
        u: fwd.u,
        v: fwd.v,
        v_data: v_data.clone(),
        residual,
        j0,
    })
}

/// Adjoint state: the discrete-harmonic field whose boundary values solve
/// `M_b z_B = W r` (the lumped-mass residual mapped back to nodal values).
pub fn solve_adjoint(sys: &DirichletSystem, residual: &BoundaryTrace) -> Result<NodalField> {
    let wr: Vec<f64> = residual
        .values
        .iter()
        .zip(&residual.arc_weights)
        .map(|(r, w)| r * w)
        .collect();
    sys.solve(&sys.boundary_mass_solve(&wr))
}

/// Data gradient `J₀′(γ)[h_k]` from the forward and adjoint states.
pub fn gradient_2d(
    sys: &DirichletSystem,
    u: &NodalField,
    z: &NodalField,
    g: &GammaGrid,
    quadrature: GradientQuadrature,
) -> (Vec<f64>, Vec<bool>) {
    let n = g.n_nodes();
    let mut grad = vec![0.0; n];
    let mut touched = vec![false; n];
    match quadrature {
        GradientQuadrature::Consistent => {
            let kz = sys.stiffness().mul_vec(&z.values);
            // interior rows of K z vanish for a discrete-harmonic z
            for &b in &sys.mesh().boundary {
                g.add_antiderivative_sensitivity(u.values[b], kz[b], &mut grad);
                mark_span(g, g.anchor(), u.values[b], &mut touched);
            }
        }
        GradientQuadrature::Barycentric => {
            let mesh: &DiskMesh = sys.mesh();
            for (t, tri) in mesh.triangles.iter().enumerate() {
                let ke = &sys.elements()[t];
                // area · ∇z·A∇u = zᵀ K_T u
                let mut w = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        w += z.values[tri[i]] * ke[i][j] * u.values[tri[j]];
                    }
                }
                let s = (u.values[tri[0]] + u.values[tri[1]] + u.values[tri[2]]) / 3.0;
                let h = g.hat_at(s).expect("finite barycentric value");
                let (i0, i1) = h.node_indices;
                grad[i0] += w * h.weights.0;
                grad[i1] += w * h.weights.1;
                touched[i0] |= h.weights.0 > 0.0;
                touched[i1] |= h.weights.1 > 0.0;
            }
        }
    }
    let uninformed = touched.iter().map(|t| !t).collect();
    for (gk, t) in grad.iter_mut().zip(&touched) {
        if !t {
            *gk = 0.0;
        }
    }
    (grad, uninformed)
}

/// Marks the hats whose support meets the span between `a` and `b`.
fn mark_span(g: &GammaGrid, a: f64, b: f64, touched: &mut [bool]) {
    let (lo, hi) = (a.min(b).max(g.s_lo()), a.max(b).min(g.s_hi()));
    if hi <= lo {
        return;
    }
    let h = g.spacing();
    let first = ((lo - g.s_lo()) / h).floor() as usize;
    let last = (((hi - g.s_lo()) / h).ceil() as usize).min(g.n_nodes() - 1);
    for t in &mut touched[first..=last] {
        *t = true;
    }
}

/// Objective value and data gradient for one 2D measurement.
pub fn evaluate_2d(
    sys: &DirichletSystem,
    g: &GammaGrid,
    bc: &BoundaryTrace,
    v_data: &BoundaryTrace,
    mask: &BoundaryMask,
    quadrature: GradientQuadrature,
) -> Result<(MisfitState, Vec<f64>, Vec<bool>)> {
    let state = misfit(sys, g, bc, v_data, mask)?;
    let z = solve_adjoint(sys, &state.residual)?;
    let (grad, uninformed) = gradient_2d(sys, &state.u, &z, g, quadrature);
    Ok((state, grad, uninformed))
}

/// One boundary measurement: Dirichlet data and the observed conormal flux.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement2D {
    pub bc: BoundaryTrace,
    pub data: BoundaryTrace,
}

/// Sum of misfits and data gradients over several measurements.
///
/// Measurements are evaluated in parallel and then reduced in input order
/// with compensated sums, so the result does not depend on thread timing.
pub fn evaluate_many_2d(
    sys: &DirichletSystem,
    g: &GammaGrid,
    measurements: &[Measurement2D],
    mask: &BoundaryMask,
    quadrature: GradientQuadrature,
) -> Result<(Vec<f64>, Vec<f64>, Vec<bool>)> {
    let parts: Vec<(MisfitState, Vec<f64>, Vec<bool>)> = measurements
        .par_iter()
        .map(|m| evaluate_2d(sys, g, &m.bc, &m.data, mask, quadrature))
        .collect::<Result<_>>()?;
    let j0s = parts.iter().map(|p| p.0.j0).collect();
    let n = g.n_nodes();
    let grad = (0..n)
        .map(|k| parts.iter().map(|p| p.1[k]).collect::<CompensatedSum>().value())
        .collect();
    let uninformed = (0..n).map(|k| parts.iter().all(|p| p.2[k])).collect();
    Ok((j0s, grad, uninformed))
}

fn check_lambdas(g: &GammaGrid, lambdas: &[f64], v_data: &[f64]) -> Result<()> {
    if lambdas.len() != v_data.len() {
        return Err(Error::InvalidArgument(format!(
            "{} Dirichlet values but {} data values",
            lambdas.len(),
            v_data.len()
        )));
    }
    if let Some(&l) = lambdas.iter().find(|&&l| !(l >= g.s_lo() && l <= g.s_hi())) {
        return Err(Error::Range {
            what: "lambda",
            value: l,
            lo: g.s_lo(),
            hi: g.s_hi(),
        });
    }
    Ok(())
}

/// Residuals `Γ(λ)/c_a − v(λ)` of the 1D problem.
pub fn residuals_1d(g: &GammaGrid, a: &Coefficient1D, lambdas: &[f64], v_data: &[f64]) -> Result<Vec<f64>> {
    check_lambdas(g, lambdas, v_data)?;
    lambdas
        .iter()
        .zip(v_data)
        .map(|(&l, &v)| Ok(g.antiderivative(l)? / a.c_a() - v))
        .collect()
}

/// `½ Σ_λ (Γ(λ)/c_a − v(λ))²`.
pub fn objective_1d(g: &GammaGrid, a: &Coefficient1D, lambdas: &[f64], v_data: &[f64]) -> Result<f64> {
    let r = residuals_1d(g, a, lambdas, v_data)?;
    Ok(0.5 * r.iter().map(|x| x * x).collect::<CompensatedSum>().value())
}

/// Closed-form data gradient `Σ_λ r_λ (1/c_a) ∫₀^λ h_k`.
pub fn gradient_1d(g: &GammaGrid, a: &Coefficient1D, lambdas: &[f64], v_data: &[f64]) -> Result<Vec<f64>> {
    let r = residuals_1d(g, a, lambdas, v_data)?;
    let mut grad = vec![0.0; g.n_nodes()];
    for (&l, rl) in lambdas.iter().zip(&r) {
        g.add_antiderivative_sensitivity(l, rl / a.c_a(), &mut grad);
    }
    Ok(grad)
}

/// The 2D adjoint formula specialized to 1D.
///
/// The adjoint state solves `(a z')' = 0`, `z(0) = 0`, `z(1) = r`, so
/// `a z' = r / c_a`. The derivative `∫ a z' u' h_k(u) dx` is accumulated cell
/// by cell along the exact forward solution on the sample grid of `a`.
pub fn gradient_1d_adjoint(g: &GammaGrid, a: &Coefficient1D, lambdas: &[f64], v_data: &[f64]) -> Result<Vec<f64>> {
    check_lambdas(g, lambdas, v_data)?;
    let x: Vec<f64> = (0..=a.n_cells()).map(|i| i as f64 / a.n_cells() as f64).collect();
    let mut grad = vec![0.0; g.n_nodes()];
    for (&l, &v) in lambdas.iter().zip(v_data) {
        let sol = solve_forward_exact(g, a, l, &x)?;
        let r = sol.flux - v;
        let az = r / a.c_a();
        // ∫_{cell} u' h_k(u) dx = ∫_{u_i}^{u_{i+1}} h_k
        for w in sol.u.windows(2) {
            g.add_antiderivative_sensitivity(w[1], az, &mut grad);
            g.add_antiderivative_sensitivity(w[0], -az, &mut grad);
        }
    }
    Ok(grad)
}

/// Adds the regularizer: `total = data + β · ∇(½|γ|²)`.
pub fn full_gradient(data_part: Vec<f64>, g: &GammaGrid, beta: f64, weighting: &Weighting) -> Result<GradientVector> {
    if data_part.len() != g.n_nodes() {
        return Err(Error::InvalidArgument(format!(
            "gradient has {} entries for {} nodes",
            data_part.len(),
            g.n_nodes()
        )));
    }
    let reg_part: Vec<f64> = g.seminorm_gradient(weighting)?.into_iter().map(|v| 0.5 * v).collect();
    let total = data_part.iter().zip(&reg_part).map(|(d, r)| d + beta * r).collect();
    Ok(GradientVector {
        uninformed: vec![false; data_part.len()],
        data_part,
        reg_part,
        total,
    })
}

/// One row of a gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckRow {
    pub node: usize,
    pub adjoint: f64,
    pub fd: f64,
    pub rel_err: f64,
}

/// Central differences of `objective` in every nodal direction.
pub fn finite_difference_check(
    g: &GammaGrid,
    adjoint: &[f64],
    step: f64,
    objective: impl Fn(&GammaGrid) -> Result<f64> + Sync,
) -> Result<Vec<GradCheckRow>> {
    (0..g.n_nodes())
        .into_par_iter()
        .map(|k| {
            let mut plus = g.values().to_vec();
            let mut minus = g.values().to_vec();
            plus[k] += step;
            minus[k] -= step;
            let fd = (objective(&g.with_values(plus)?)? - objective(&g.with_values(minus)?)?) / (2.0 * step);
            let denom = adjoint[k].abs().max(fd.abs());
            let rel_err = if denom == 0.0 {
                0.0
            } else {
                (adjoint[k] - fd).abs() / denom
            };
            Ok(GradCheckRow {
                node: k,
                adjoint: adjoint[k],
                fd,
                rel_err,
            })
        })
        .collect()
}

/// CSV `node_index,adjoint_grad,fd_grad,rel_err`.
pub fn write_gradcheck_csv<W: Write>(mut w: W, rows: &[GradCheckRow]) -> Result<()> {
    writeln!(w, "node_index,adjoint_grad,fd_grad,rel_err")?;
    for r in rows {
        writeln!(w, "{},{:.17e},{:.17e},{:.17e}", r.node, r.adjoint, r.fd, r.rel_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver2d::{boundary_data, LinearSolver, MatrixField};
    use std::sync::Arc;

    fn system(r: usize) -> DirichletSystem {
        DirichletSystem::new(
            Arc::new(DiskMesh::build(r)),
            &MatrixField::identity(),
            LinearSolver::Cholesky,
        )
        .unwrap()
    }

    fn gamma_dagger(n: usize) -> GammaGrid {
        GammaGrid::from_fn(-0.2, 1.8, n, 1e-3, |s| 0.3 * s * s + 0.2 * s + 0.25).unwrap()
    }

    fn self_data(sys: &DirichletSystem, g: &GammaGrid, k: f64) -> (BoundaryTrace, BoundaryTrace) {
        let bc = boundary_data(sys.mesh().clone(), k);
        let fwd = solve_forward_kirchhoff(sys, g, &bc).unwrap();
        let q = sys.conormal_trace(&fwd.v).unwrap();
        (bc, q)
    }

    #[test]
    fn self_consistent_data_has_zero_misfit_and_gradient() {
        let sys = system(3);
        let g = gamma_dagger(21);
        let (bc, q) = self_data(&sys, &g, 1.1);
        let (state, grad, _) =
            evaluate_2d(&sys, &g, &bc, &q, &BoundaryMask::full(), GradientQuadrature::Consistent).unwrap();
        assert_eq!(state.j0, 0.0);
        assert!(grad.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn misfit_of_cos_theta_trace() {
        let sys = system(4);
        let g = GammaGrid::constant(-1.0, 1.0, 5, 1.0, 1e-3).unwrap();
        let bc = BoundaryTrace::from_fn(sys.mesh().clone(), f64::cos);
        let zero = bc.with_values(vec![0.0; bc.values.len()]);
        let state = misfit(&sys, &g, &bc, &zero, &BoundaryMask::full()).unwrap();
        assert!((state.j0 - std::f64::consts::FRAC_PI_2).abs() < 1e-3);
        // doubling the residual quadruples the misfit
        let doubled = state.residual.values.iter().map(|r| 2.0 * r).collect::<Vec<_>>();
        let j = weighted_half_square(&doubled, &state.residual.arc_weights);
        assert!((j - 4.0 * state.j0).abs() < 1e-14);
    }

    #[test]
    fn mask_zeroes_residual_off_s() {
        let sys = system(3);
        let g = GammaGrid::constant(-1.0, 1.0, 5, 1.0, 1e-3).unwrap();
        let bc = BoundaryTrace::from_fn(sys.mesh().clone(), f64::cos);
        let zero = bc.with_values(vec![0.0; bc.values.len()]);
        let mask = BoundaryMask::from_intervals(vec![(-1.0, 1.0)]).unwrap();
        let state = misfit(&sys, &g, &bc, &zero, &mask).unwrap();
        for (t, r) in sys.mesh().boundary_theta.iter().zip(&state.residual.values) {
            if !(-1.0..=1.0).contains(t) {
                assert_eq!(*r, 0.0);
            }
        }
    }

    #[test]
    fn adjoint_is_linear_and_vanishes_for_zero_residual() {
        let sys = system(3);
        let r = BoundaryTrace::from_fn(sys.mesh().clone(), f64::cos);
        let z0 = solve_adjoint(&sys, &r.with_values(vec![0.0; r.values.len()])).unwrap();
        assert!(z0.values.iter().all(|v| *v == 0.0));
        let z1 = solve_adjoint(&sys, &r).unwrap();
        let z3 = solve_adjoint(&sys, &r.with_values(r.values.iter().map(|v| 3.0 * v).collect())).unwrap();
        for (a, b) in z1.values.iter().zip(&z3.values) {
            assert!((3.0 * a - b).abs() < 1e-13);
        }
        // z ≈ x
        let err = sys
            .mesh()
            .vertices
            .iter()
            .zip(&z1.values)
            .map(|(p, z)| (p[0] - z).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-2, "err {err}");
    }

    #[test]
    fn gradient_2d_matches_finite_differences() {
        let sys = system(3);
        let truth = gamma_dagger(21);
        let (bc, q) = self_data(&sys, &truth, 1.1);
        let g = GammaGrid::from_fn(-0.2, 1.8, 21, 1e-3, |s| 0.5 * s + 0.5).unwrap();
        let mask = BoundaryMask::full();
        let (_, grad, _) = evaluate_2d(&sys, &g, &bc, &q, &mask, GradientQuadrature::Consistent).unwrap();
        let rows = finite_difference_check(&g, &grad, 1e-5, |gg| Ok(misfit(&sys, gg, &bc, &q, &mask)?.j0)).unwrap();
        for r in rows {
            if r.fd.abs() > 1e-8 {
                assert!(r.rel_err <= 1e-3, "{r:?}");
            }
        }
    }

    #[test]
    fn zero_adjoint_gives_zero_gradient() {
        let sys = system(2);
        let g = gamma_dagger(11);
        let bc = boundary_data(sys.mesh().clone(), 1.3);
        let u = solve_forward_kirchhoff(&sys, &g, &bc).unwrap().u;
        let z = NodalField::from_fn(sys.mesh().clone(), |_| 0.0);
        for quad in [GradientQuadrature::Consistent, GradientQuadrature::Barycentric] {
            assert!(gradient_2d(&sys, &u, &z, &g, quad).0.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn uninformed_nodes_are_flagged() {
        // data range [−0.11, 0.99] for k = 1.1 leaves the top of [−0.2, 1.8] unseen
        let sys = system(2);
        let g = gamma_dagger(21);
        let (bc, q) = self_data(&sys, &g, 1.1);
        let noisy = q.with_values(q.values.iter().map(|v| v + 0.1).collect());
        let (_, grad, uninformed) = evaluate_2d(
            &sys,
            &g,
            &bc,
            &noisy,
            &BoundaryMask::full(),
            GradientQuadrature::Consistent,
        )
        .unwrap();
        assert!(uninformed[20] && !uninformed[5]);
        for (gk, u) in grad.iter().zip(&uninformed) {
            if *u {
                assert_eq!(*gk, 0.0);
            }
        }
    }

    #[test]
    fn gradient_1d_examples() {
        let g = GammaGrid::constant(0.0, 1.0, 11, 1.0, 1e-3).unwrap();
        let a = Coefficient1D::constant(1.0).unwrap();
        let grad = gradient_1d(&g, &a, &[1.0], &[0.0]).unwrap();
        let h = g.spacing();
        for (k, v) in grad.iter().enumerate() {
            let mass = if k == 0 || k == 10 { 0.5 * h } else { h };
            assert!((v - mass).abs() < 1e-15);
        }
        let lambdas: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
        let phi: Vec<f64> = lambdas.iter().map(|&l| g.antiderivative(l).unwrap()).collect();
        assert!(gradient_1d(&g, &a, &lambdas, &phi).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_1d_matches_finite_differences_and_adjoint_path() {
        let g = GammaGrid::from_fn(0.0, 1.0, 101, 1e-3, |s| -0.25 * s + 0.5).unwrap();
        let a = Coefficient1D::from_fn(64, |x| 1.0 + 0.5 * x).unwrap();
        let lambdas: Vec<f64> = (1..=100).map(|k| 0.01 * k as f64).collect();
        let data: Vec<f64> = lambdas.iter().map(|&l| (1.0 - (-l).exp()) / a.c_a()).collect();
        let grad = gradient_1d(&g, &a, &lambdas, &data).unwrap();
        let rows = finite_difference_check(&g, &grad, 1e-5, |gg| objective_1d(gg, &a, &lambdas, &data)).unwrap();
        assert!(
            rows.iter().all(|r| r.rel_err <= 1e-6),
            "{:?}",
            rows.iter().map(|r| r.rel_err).fold(0.0, f64::max)
        );
        let via_adjoint = gradient_1d_adjoint(&g, &a, &lambdas, &data).unwrap();
        for (p, q) in grad.iter().zip(&via_adjoint) {
            assert!((p - q).abs() <= 1e-8 * p.abs().max(1e-12));
        }
    }

    #[test]
    fn full_gradient_examples() {
        let g = GammaGrid::constant(0.0, 1.0, 6, 2.0, 1e-3).unwrap();
        let fg = full_gradient(vec![0.0; 6], &g, 0.1, &Weighting::Uniform).unwrap();
        assert!(fg.total.iter().all(|v| *v == 0.0));
        let lin = GammaGrid::from_fn(0.0, 1.0, 6, 1e-3, |s| s).unwrap();
        let data = vec![1.0; 6];
        assert_eq!(
            full_gradient(data.clone(), &lin, 0.0, &Weighting::Uniform)
                .unwrap()
                .total,
            data
        );
    }
}
