//! One function per command; each writes its artifacts and returns a summary.

use std::sync::Arc;

use quasilin_core::adjoint::{
    evaluate_2d, finite_difference_check, gradient_1d, misfit, objective_1d, write_gradcheck_csv, GradCheckRow,
};
use quasilin_core::optimize::{
    preset_1d, preset_2d, run_reconstruction, write_history_csv, TruthProfile, DEFAULT_FLOOR, GAMMA_NODES,
};
use quasilin_core::solver1d::{neumann_exact, solve_forward_exact, solve_forward_fd, uniform_grid, write_neumann_csv};
use quasilin_core::solver2d::{
    boundary_data, solve_forward_kirchhoff, solve_forward_picard, write_mesh_csv, PicardOptions,
};
use quasilin_core::stability::{
    bound_rhs, exhibit_violation, holder_sweep, minimizer_profile, monte_carlo_inequality, write_inequality_csv,
    write_profile_csv, write_sweep_csv, Exponent, ProfileForm,
};
use quasilin_core::{
    BoundaryMask, Coefficient1D, DirichletSystem, DiskMesh, GammaGrid, GradientQuadrature, LinearSolver, MatrixField,
    Problem, Reconstruction,
};
use toml::{Table, Value};

use crate::artifacts::{inputs_hash, Artifacts, Manifest};
use crate::config::{Command, RunConfig};
use crate::error::CliError;

/// Relative gradient errors only count where the gradient is this large relative to its peak.
const GRADCHECK_FLOOR: f64 = 1e-6;

/// Validates, runs the command and writes artifacts plus `manifest.toml`.
///
/// On a solver failure the partial artifacts stay, the manifest records the
/// failure and `error.json` holds the machine-readable record.
pub fn run(config: &RunConfig) -> Result<Table, CliError> {
    let diagnostics = config.validate();
    if !diagnostics.is_empty() {
        return Err(CliError::Invalid(diagnostics));
    }
    let resolved = config.resolved();
    let command = resolved.command.expect("validated configuration has a command");
    let mut out = Artifacts::create(&resolved.output_dir)?;
    let mut summary = Table::new();
    let result = match command {
        Command::Forward1d => forward1d(&resolved, &mut out, &mut summary),
        Command::Forward2d => forward2d(&resolved, &mut out, &mut summary),
        Command::Reconstruct1d | Command::Reconstruct2d => reconstruct(&resolved, &mut out, &mut summary),
        Command::Gradcheck => gradcheck(&resolved, &mut out, &mut summary),
        Command::StabilitySweep => stability_sweep(&resolved, &mut out, &mut summary),
        Command::InequalityCheck => inequality_check(&resolved, &mut out, &mut summary),
    };
    let error = result.as_ref().err().map(ToString::to_string);
    if let Err(e) = &result {
        let record = serde_json::to_string_pretty(&e.record()).expect("error record serializes");
        // the original error matters more than a failure to store it
        let _ = out.write_bytes("error.json", record.as_bytes());
    }
    Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        status: if result.is_ok() { "ok" } else { "failed" },
        inputs_hash: inputs_hash(&resolved),
        error,
        config: &resolved,
        summary: &summary,
        artifacts: out.hashes(),
    }
    .write(out.root())?;
    result.map(|()| summary)
}

fn put(summary: &mut Table, key: &str, value: impl Into<Value>) {
    summary.insert(key.to_string(), value.into());
}

fn tag(x: f64) -> String {
    format!("{x}")
}

fn truth_grid(profile: TruthProfile, lo: f64, hi: f64, nodes: usize) -> Result<GammaGrid, CliError> {
    Ok(GammaGrid::from_fn(lo, hi, nodes, DEFAULT_FLOOR, |s| profile.eval(s))?)
}

fn forward1d(c: &RunConfig, out: &mut Artifacts, summary: &mut Table) -> Result<(), CliError> {
    let p = &c.problem1d;
    let profile = p.gamma.profile();
    let g = truth_grid(profile, 0.0, 1.0, GAMMA_NODES)?;
    let a = Coefficient1D::constant(1.0)?;
    let phi = p
        .lambdas
        .iter()
        .map(|&l| neumann_exact(&g, &a, l))
        .collect::<quasilin_core::Result<Vec<_>>>()?;
    out.write_with("neumann.csv", |w| write_neumann_csv(w, &p.lambdas, &phi))?;
    out.write_with("gamma.csv", |w| g.write_csv(w))?;
    out.write_series(
        "plot/phi.dat",
        "lambda phi",
        p.lambdas.iter().copied().zip(phi.iter().copied()),
    )?;

    let grid = uniform_grid(p.n_cells);
    let mut flux_gap = 0.0f64;
    let mut profile_gap = 0.0f64;
    for &l in &p.profile_lambdas {
        let exact = solve_forward_exact(&g, &a, l, &grid)?;
        let fd = solve_forward_fd(&g, &a, l, p.n_cells)?;
        out.write_with(&format!("profile_exact_lambda{}.csv", tag(l)), |w| exact.write_csv(w))?;
        out.write_with(&format!("profile_fd_lambda{}.csv", tag(l)), |w| fd.write_csv(w))?;
        out.write_series(
            &format!("plot/profile_lambda{}.dat", tag(l)),
            "x u",
            exact.x_grid.iter().copied().zip(exact.u.iter().copied()),
        )?;
        flux_gap = flux_gap.max((fd.flux - exact.flux).abs());
        let gap = exact
            .u
            .iter()
            .zip(&fd.u)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        profile_gap = profile_gap.max(gap);
    }
    put(summary, "gamma", profile.name());
    put(summary, "measurements", p.lambdas.len() as i64);
    put(summary, "max_flux_gap_fd", flux_gap);
    put(summary, "max_profile_gap_fd", profile_gap);
    Ok(())
}

fn disk_system(n_refine: usize) -> Result<DirichletSystem, CliError> {
    let mesh = Arc::new(DiskMesh::build(n_refine));
    Ok(DirichletSystem::new(
        mesh,
        &MatrixField::identity(),
        LinearSolver::Cholesky,
    )?)
}

fn forward2d(c: &RunConfig, out: &mut Artifacts, summary: &mut Table) -> Result<(), CliError> {
    let p = &c.problem2d;
    let (problem, _) = preset_2d(p.xi.clone(), 0.0);
    let g = truth_grid(
        problem.truth,
        problem.initial.s_lo(),
        problem.initial.s_hi(),
        GAMMA_NODES,
    )?;
    let sys = disk_system(p.n_refine)?;
    let mesh = sys.mesh().clone();
    let (mut verts, mut tris) = (Vec::new(), Vec::new());
    write_mesh_csv(&mesh, &mut verts, &mut tris)?;
    out.write_bytes("mesh_vertices.csv", &verts)?;
    out.write_bytes("mesh_triangles.csv", &tris)?;
    out.write_with("gamma.csv", |w| g.write_csv(w))?;

    let (mut clamped, mut net_flux, mut picard_gap) = (0usize, 0.0f64, 0.0f64);
    for &k in &p.xi {
        let bc = boundary_data(mesh.clone(), k);
        let sol = solve_forward_kirchhoff(&sys, &g, &bc)?;
        let q = sys.conormal_trace(&sol.v)?;
        clamped += sol.clamped;
        net_flux = net_flux.max(q.integral().abs());
        out.write_with(&format!("u_xi{}.csv", tag(k)), |w| sol.u.write_csv(w))?;
        out.write_with(&format!("flux_xi{}.csv", tag(k)), |w| q.write_csv(w))?;
        out.write_series(
            &format!("plot/flux_xi{}.dat", tag(k)),
            "theta flux",
            mesh.boundary_theta.iter().copied().zip(q.values.iter().copied()),
        )?;
        if p.picard_check {
            let pic = solve_forward_picard(&sys, &g, &bc, PicardOptions::default())?;
            let gap = pic
                .u
                .values
                .iter()
                .zip(&sol.u.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            picard_gap = picard_gap.max(gap);
        }
    }
    put(summary, "mesh_id", mesh.id());
    put(summary, "vertices", mesh.n_vertices() as i64);
    put(summary, "measurements", p.xi.len() as i64);
    put(summary, "clamped_vertices", clamped as i64);
    put(summary, "max_net_flux", net_flux);
    if p.picard_check {
        put(summary, "max_picard_gap", picard_gap);
    }
    Ok(())
}

fn reconstruct(c: &RunConfig, out: &mut Artifacts, summary: &mut Table) -> Result<(), CliError> {
    let config = c.optim_config();
    let problem = if c.command == Some(Command::Reconstruct1d) {
        let (mut p, _) = preset_1d(c.problem1d.gamma, c.noise_eps);
        p.lambdas = c.problem1d.lambdas.clone();
        Problem::OneD(p)
    } else {
        let (mut p, _) = preset_2d(c.problem2d.xi.clone(), c.noise_eps);
        p.n_refine = c.problem2d.n_refine;
        Problem::TwoD(p)
    };
    let (truth, interval) = match &problem {
        Problem::OneD(p) => (p.truth, (p.initial.s_lo(), p.initial.s_hi())),
        Problem::TwoD(p) => (p.truth, (p.initial.s_lo(), p.initial.s_hi())),
    };
    put(summary, "truth", truth.name());
    match run_reconstruction(&problem, &config) {
        Ok(r) => {
            write_reconstruction(out, &r.gamma, &r.history, truth)?;
            summarize(summary, &r);
            Ok(())
        }
        Err(aborted) => {
            write_reconstruction(out, &aborted.last, &aborted.history, truth)?;
            put(summary, "records", aborted.history.len() as i64);
            put(summary, "interval_lo", interval.0);
            put(summary, "interval_hi", interval.1);
            Err(CliError::Solver(aborted.error))
        }
    }
}

fn summarize(summary: &mut Table, r: &Reconstruction) {
    let last = r.history.last().expect("history holds the initial record");
    put(summary, "iterations", r.meta.iterations as i64);
    put(summary, "final_j0", last.j0);
    put(summary, "final_reg", last.reg);
    put(summary, "final_l2_error", last.l2_error);
    put(summary, "initial_l2_error", r.history[0].l2_error);
    put(summary, "clamp_count", r.meta.clamp_count as i64);
    put(summary, "data_gamma_nodes", r.meta.data_gamma_nodes as i64);
    put(
        summary,
        "mesh_ids",
        Value::Array(r.meta.mesh_ids.iter().cloned().map(Value::from).collect()),
    );
}

fn write_reconstruction(
    out: &mut Artifacts,
    gamma: &GammaGrid,
    history: &[quasilin_core::IterRecord],
    truth: TruthProfile,
) -> Result<(), CliError> {
    out.write_with("gamma_hat.csv", |w| gamma.write_csv(w))?;
    out.write_bytes("gamma_hat.toml", gamma.to_record().as_bytes())?;
    out.write_with("history.csv", |w| write_history_csv(w, history))?;
    let nodes = gamma.nodes();
    out.write_series(
        "plot/gamma_hat.dat",
        "s gamma_hat",
        nodes.iter().map(|&s| (s, gamma.value_at(s))),
    )?;
    // the truth is drawn finer than the estimate so kinks stay visible
    let (lo, hi) = (gamma.s_lo(), gamma.s_hi());
    let fine = 4 * (nodes.len() - 1);
    out.write_series(
        "plot/gamma_true.dat",
        "s gamma_true",
        (0..=fine).map(|i| {
            let s = lo + (hi - lo) * i as f64 / fine as f64;
            (s, truth.eval(s))
        }),
    )?;
    out.write_series("plot/j0.dat", "iter j0", history.iter().map(|r| (r.iter as f64, r.j0)))?;
    out.write_series(
        "plot/l2_error.dat",
        "iter l2_error",
        history.iter().map(|r| (r.iter as f64, r.l2_error)),
    )?;
    out.write_bytes("plot/figure.gp", RECONSTRUCTION_GNUPLOT.as_bytes())
}

const RECONSTRUCTION_GNUPLOT: &str = "\
# gnuplot -p figure.gp
set multiplot layout 1,3
set title 'coefficient'
set xlabel 's'
plot 'gamma_true.dat' with lines title 'true', 'gamma_hat.dat' with linespoints pt 7 ps 0.4 title 'estimate'
set title 'misfit'
set xlabel 'iteration'
set logscale y
plot 'j0.dat' with lines notitle
set title 'L2 error'
plot 'l2_error.dat' with lines notitle
unset multiplot
";

fn gradcheck(c: &RunConfig, out: &mut Artifacts, summary: &mut Table) -> Result<(), CliError> {
    let gc = &c.gradcheck;
    let rows: Vec<GradCheckRow> = if gc.dimension == 1 {
        let p = &c.problem1d;
        let a = Coefficient1D::constant(1.0)?;
        let truth = truth_grid(p.gamma.profile(), 0.0, 1.0, gc.nodes)?;
        let data = p
            .lambdas
            .iter()
            .map(|&l| neumann_exact(&truth, &a, l))
            .collect::<quasilin_core::Result<Vec<_>>>()?;
        let g = GammaGrid::from_fn(0.0, 1.0, gc.nodes, DEFAULT_FLOOR, |s| -0.25 * s + 0.5)?;
        let grad = gradient_1d(&g, &a, &p.lambdas, &data)?;
        finite_difference_check(&g, &grad, gc.step, |gg| objective_1d(gg, &a, &p.lambdas, &data))?
    } else {
        let sys = disk_system(gc.n_refine)?;
        let truth = truth_grid(TruthProfile::Quadratic, -0.2, 1.8, gc.nodes)?;
        let bc = boundary_data(sys.mesh().clone(), gc.xi);
        let fwd = solve_forward_kirchhoff(&sys, &truth, &bc)?;
        let data = sys.conormal_trace(&fwd.v)?;
        let mask = BoundaryMask::full();
        let g = GammaGrid::from_fn(-0.2, 1.8, gc.nodes, DEFAULT_FLOOR, |s| 0.5 * s + 0.5)?;
        let (_, grad, _) = evaluate_2d(&sys, &g, &bc, &data, &mask, GradientQuadrature::Consistent)?;
        put(summary, "mesh_id", sys.mesh().id());
        finite_difference_check(&g, &grad, gc.step, |gg| Ok(misfit(&sys, gg, &bc, &data, &mask)?.j0))?
    };
    out.write_with("gradcheck.csv", |w| write_gradcheck_csv(w, &rows))?;
    out.write_series(
        "plot/gradcheck.dat",
        "node rel_err",
        rows.iter().map(|r| (r.node as f64, r.rel_err)),
    )?;
    let peak = rows.iter().map(|r| r.adjoint.abs()).fold(0.0, f64::max);
    let max_rel = rows
        .iter()
        .filter(|r| r.adjoint.abs().max(r.fd.abs()) > GRADCHECK_FLOOR * peak)
        .map(|r| r.rel_err)
        .fold(0.0, f64::max);
    put(summary, "dimension", gc.dimension as i64);
    put(summary, "nodes", rows.len() as i64);
    put(summary, "max_rel_err", max_rel);
    Ok(())
}

fn stability_sweep(c: &RunConfig, out: &mut Artifacts, summary: &mut Table) -> Result<(), CliError> {
    let s = &c.stability;
    let p = Exponent::new(s.p)?;
    let sweep = holder_sweep(p, s.m, &s.s_grid())?;
    out.write_with("sweep.csv", |w| write_sweep_csv(w, &sweep.rows))?;
    out.write_series(
        "plot/sweep.dat",
        "sup_phi gap",
        sweep.rows.iter().map(|r| (r.sup_phi, r.gap)),
    )?;
    out.write_bytes(
        "plot/figure.gp",
        b"# gnuplot -p figure.gp\nset logscale xy\nset xlabel 'sup |phi1 - phi2|'\nset ylabel 'sup |gamma1 - gamma2|'\nplot 'sweep.dat' with linespoints pt 7 notitle\n",
    )?;
    // an exponent just above the optimal one fails for any fixed constant
    let q = p.holder() + 0.1;
    let v = exhibit_violation(p, s.m, q, 10.0)?;
    put(summary, "p", s.p);
    put(summary, "slope", sweep.slope);
    put(summary, "expected_slope", sweep.expected);
    put(summary, "slope_error", (sweep.slope - sweep.expected).abs());
    put(summary, "violation_q", q);
    put(summary, "violation_s", v.s);
    put(summary, "violation_ratio", v.ratio);
    Ok(())
}

fn inequality_check(c: &RunConfig, out: &mut Artifacts, summary: &mut Table) -> Result<(), CliError> {
    let s = &c.stability;
    let mut total = 0i64;
    for &p in &s.p_values {
        let report = monte_carlo_inequality(p, s.samples, c.seed)?;
        out.write_with(&format!("inequality_p{}.csv", tag(p)), |w| {
            write_inequality_csv(w, &report.rows)
        })?;
        let m = minimizer_profile(ProfileForm::A2, (0.0, 1.0), 1.0, 0.2, p)?;
        out.write_with(&format!("profile_p{}.csv", tag(p)), |w| write_profile_csv(w, &m, 1000))?;
        let ratio = m.fp(p)? / bound_rhs(m.sup(), m.l1(), p)?;
        let expected = p.powf(p) / ((p - 1.0).powf(p - 1.0) * (2.0 * p - 1.0));
        let mut entry = Table::new();
        put(&mut entry, "violations", report.violations as i64);
        put(&mut entry, "min_ratio", report.min_ratio);
        put(&mut entry, "minimizer_ratio", ratio);
        put(&mut entry, "minimizer_ratio_expected", expected);
        summary.insert(format!("p{}", tag(p)), Value::Table(entry));
        total += report.violations as i64;
    }
    put(summary, "samples", s.samples as i64);
    put(summary, "violations", total);
    Ok(())
}
