//! Reconstruction driver: noise model, gradient descent and Adam, and the
//! 1D and 2D experiment presets.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::adjoint::{evaluate_many_2d, full_gradient, gradient_1d, residuals_1d, GradientQuadrature, Measurement2D};
use crate::coeffspace::{GammaGrid, Weighting};
use crate::error::{Error, Result};
use crate::numerics::{simpson, CompensatedSum};
use crate::solver1d::{neumann_exact, Coefficient1D};
use crate::solver2d::{
    boundary_data, interpolate_periodic, mesh::DiskMesh, solve_forward_kirchhoff, BoundaryMask, DirichletSystem,
    LinearSolver, MatrixField,
};

/// `v_i (1 + ε ξ_i)` with `ξ_i` standard normal from a seeded ChaCha8 stream.
pub fn add_noise(v: &[f64], eps: f64, seed: u64) -> Vec<f64> {
    add_noise_stream(v, eps, seed, 0)
}

/// [`add_noise`] on an independent stream of the same seed.
pub fn add_noise_stream(v: &[f64], eps: f64, seed: u64, stream: u64) -> Vec<f64> {
    if eps == 0.0 {
        return v.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    v.iter()
        .map(|&x| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            x * (1.0 + eps * xi)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub method: Method,
    pub step: f64,
    pub beta_reg: f64,
    pub max_iter: usize,
    /// Measurements per step; the full set when it is at least their number.
    pub batch: usize,
    pub momenta: (f64, f64),
    pub adam_eps: f64,
    pub positivity_floor: f64,
    pub seed: u64,
    /// Stop once `j0 ≤ value`; off when `None`.
    pub discrepancy_stop: Option<f64>,
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidArgument(format!("step must be > 0, got {}", self.step)));
        }
        if !(self.beta_reg >= 0.0 && self.beta_reg.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta_reg must be ≥ 0, got {}",
                self.beta_reg
            )));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch must be ≥ 1".into()));
        }
        let (b1, b2) = self.momenta;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::InvalidArgument(format!(
                "momenta must lie in [0, 1), got ({b1}, {b2})"
            )));
        }
        if !(self.positivity_floor > 0.0) {
            return Err(Error::InvalidArgument("positivity_floor must be > 0".into()));
        }
        Ok(())
    }
}

/// One line of the optimization history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub j0: f64,
    pub reg: f64,
    /// `NaN` when no ground truth is known.
    pub l2_error: f64,
}

/// Adam moment estimates and step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

fn check_len(g: &GammaGrid, gradient: &[f64]) -> Result<()> {
    if gradient.len() != g.n_nodes() {
        return Err(Error::InvalidArgument(format!(
            "gradient has {} entries for {} nodes",
            gradient.len(),
            g.n_nodes()
        )));
    }
    Ok(())
}

/// `γ − step · ∇J`, projected onto `γ ≥ floor`.
pub fn gd_step(g: &GammaGrid, gradient: &[f64], step: f64) -> Result<GammaGrid> {
    check_len(g, gradient)?;
    let values = g.values().iter().zip(gradient).map(|(v, d)| v - step * d).collect();
    Ok(g.with_values(values)?.project_positive())
}

/// Bias-corrected Adam update followed by projection.
pub fn adam_step(
    g: &GammaGrid,
    gradient: &[f64],
    state: &AdamState,
    config: &OptimConfig,
) -> Result<(GammaGrid, AdamState)> {
    check_len(g, gradient)?;
    let (b1, b2) = config.momenta;
    let mut next = if state.m.len() == g.n_nodes() {
        state.clone()
    } else {
        AdamState::new(g.n_nodes())
    };
    next.t += 1;
    let c1 = 1.0 - b1.powi(next.t as i32);
    let c2 = 1.0 - b2.powi(next.t as i32);
    let mut values = g.values().to_vec();
    for k in 0..values.len() {
        next.m[k] = b1 * next.m[k] + (1.0 - b1) * gradient[k];
        next.v[k] = b2 * next.v[k] + (1.0 - b2) * gradient[k] * gradient[k];
        let m_hat = next.m[k] / c1;
        let v_hat = next.v[k] / c2;
        values[k] -= config.step * m_hat / (v_hat.sqrt() + config.adam_eps);
    }
    Ok((g.with_values(values)?.project_positive(), next))
}

/// Known ground-truth coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthProfile {
    /// `0.3 s² + 0.2 s + 0.25`
    Quadratic,
    /// `1 − sgn(s − ½) √|s − ½|`
    Nonsmooth,
    /// `e^{−s}`
    Exponential,
}

impl TruthProfile {
    pub fn eval(self, s: f64) -> f64 {
        match self {
            TruthProfile::Quadratic => 0.3 * s * s + 0.2 * s + 0.25,
            TruthProfile::Nonsmooth => {
                let d = s - 0.5;
                1.0 - d.signum() * d.abs().sqrt()
            }
            TruthProfile::Exponential => (-s).exp(),
        }
    }

    /// Points where the profile is not smooth.
    fn kinks(self) -> &'static [f64] {
        match self {
            TruthProfile::Nonsmooth => &[0.5],
            _ => &[],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TruthProfile::Quadratic => "quadratic",
            TruthProfile::Nonsmooth => "nonsmooth",
            TruthProfile::Exponential => "exponential",
        }
    }
}

/// Reference coefficient for the error metric.
#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    Profile(TruthProfile),
    Grid(GammaGrid),
}

impl Truth {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Truth::Profile(p) => p.eval(s),
            Truth::Grid(g) => g.value_at(s),
        }
    }
}

/// Sub-panels per piece in [`l2_error`] against analytic references.
const L2_PANELS: usize = 16;

/// `‖γ̂ − γ†‖_{L²(lo, hi)}`.
///
/// The integrand is split at every breakpoint of either function; between
/// breakpoints it is integrated by composite Simpson, which is exact when
/// both functions are piecewise linear.
pub fn l2_error(estimate: &GammaGrid, truth: &Truth, interval: (f64, f64)) -> f64 {
    let (lo, hi) = interval;
    let mut cuts: Vec<f64> = estimate.nodes();
    match truth {
        Truth::Grid(t) => cuts.extend(t.nodes()),
        Truth::Profile(p) => cuts.extend_from_slice(p.kinks()),
    }
    cuts.retain(|&c| c > lo && c < hi);
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let panels = match truth {
        Truth::Grid(_) => 2,
        Truth::Profile(_) => L2_PANELS,
    };
    let sq = |s: f64| {
        let d = estimate.value_at(s) - truth.eval(s);
        d * d
    };
    cuts.windows(2)
        .map(|w| simpson(sq, w[0], w[1], panels))
        .collect::<CompensatedSum>()
        .value()
        .sqrt()
}

/// Inversion geometry and data for the 1D experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem1D {
    pub lambdas: Vec<f64>,
    pub a: Coefficient1D,
    pub truth: TruthProfile,
    pub initial: GammaGrid,
    pub noise_eps: f64,
}

/// Inversion geometry and data for the 2D experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem2D {
    pub n_refine: usize,
    /// Amplitudes `k` of the boundary data `g_k`.
    pub xi: Vec<f64>,
    pub truth: TruthProfile,
    pub initial: GammaGrid,
    pub noise_eps: f64,
    pub mask: BoundaryMask,
    pub quadrature: GradientQuadrature,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    OneD(Problem1D),
    TwoD(Problem2D),
}

/// Which 1D ground truth to reconstruct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gamma1D {
    Nonsmooth,
    Smooth,
}

impl Gamma1D {
    pub fn profile(self) -> TruthProfile {
        match self {
            Gamma1D::Nonsmooth => TruthProfile::Nonsmooth,
            Gamma1D::Smooth => TruthProfile::Exponential,
        }
    }
}

pub const NOISE_LEVELS: [f64; 4] = [1e-1, 1e-2, 1e-3, 0.0];
pub const GAMMA_NODES: usize = 101;
pub const DEFAULT_FLOOR: f64 = 1e-3;
pub const DEFAULT_N_REFINE: usize = 4;

/// `Ξ = {1.1, 1.2, …, 2.0}`.
pub fn default_xi() -> Vec<f64> {
    (11..=20).map(|k| k as f64 / 10.0).collect()
}

/// 1D preset: `λ = 0.01 k`, `k = 1..100`, `a ≡ 1`, initial guess `−s/4 + ½`.
pub fn preset_1d(gamma: Gamma1D, noise_eps: f64) -> (Problem1D, OptimConfig) {
    let problem = Problem1D {
        lambdas: (1..=100).map(|k| k as f64 / 100.0).collect(),
        a: Coefficient1D::constant(1.0).expect("constant coefficient"),
        truth: gamma.profile(),
        initial: GammaGrid::from_fn(0.0, 1.0, GAMMA_NODES, DEFAULT_FLOOR, |s| -0.25 * s + 0.5)
            .expect("valid initial guess"),
        noise_eps,
    };
    let config = OptimConfig {
        method: Method::Adam,
        step: 1.0 / 300.0,
        beta_reg: 0.1,
        max_iter: 5000,
        batch: 100,
        momenta: (0.9, 0.9),
        adam_eps: 1e-8,
        positivity_floor: DEFAULT_FLOOR,
        seed: 0,
        discrepancy_stop: None,
    };
    (problem, config)
}

/// 2D preset: `g_k` for `k ∈ Ξ`, truth `0.3s² + 0.2s + 0.25`, initial `½s + ½`.
pub fn preset_2d(xi: Vec<f64>, noise_eps: f64) -> (Problem2D, OptimConfig) {
    let step = 1.0 / xi.len().max(1) as f64;
    let problem = Problem2D {
        n_refine: DEFAULT_N_REFINE,
        xi,
        truth: TruthProfile::Quadratic,
        initial: GammaGrid::from_fn(-0.2, 1.8, GAMMA_NODES, DEFAULT_FLOOR, |s| 0.5 * s + 0.5)
            .expect("valid initial guess"),
        noise_eps,
        mask: BoundaryMask::full(),
        quadrature: GradientQuadrature::Consistent,
    };
    let config = OptimConfig {
        method: Method::Gd,
        step,
        beta_reg: 1e-3,
        max_iter: 2000,
        batch: usize::MAX,
        momenta: (0.9, 0.9),
        adam_eps: 1e-8,
        positivity_floor: DEFAULT_FLOOR,
        seed: 0,
        discrepancy_stop: None,
    };
    (problem, config)
}

/// Descriptive metadata of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub dimension: usize,
    pub truth: String,
    pub noise_eps: f64,
    pub seed: u64,
    pub iterations: usize,
    pub mesh_ids: Vec<String>,
    pub data_gamma_nodes: usize,
    pub clamp_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub gamma: GammaGrid,
    /// Records for iterations `0..=iterations` (record 0 is the initial guess).
    pub history: Vec<IterRecord>,
    pub meta: RunMeta,
}

/// A run that stopped on an error, with everything computed up to that point.
#[derive(Debug, Clone, PartialEq)]
pub struct Aborted {
    pub error: Error,
    pub history: Vec<IterRecord>,
    pub last: GammaGrid,
}

impl std::fmt::Display for Aborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "reconstruction aborted after {} records: {}",
            self.history.len(),
            self.error
        )
    }
}

impl std::error::Error for Aborted {}

/// Objective pieces at the current iterate.
struct Evaluation {
    j0: f64,
    reg: f64,
    gradient: Vec<f64>,
}

trait Objective {
    /// Objective and gradient restricted to the measurements in `subset`.
    fn evaluate(&self, g: &GammaGrid, beta: f64, subset: &[usize]) -> Result<Evaluation>;
    fn n_measurements(&self) -> usize;
    fn interval(&self) -> (f64, f64);
}

struct Objective1D {
    lambdas: Vec<f64>,
    data: Vec<f64>,
    a: Coefficient1D,
}

impl Objective for Objective1D {
    fn evaluate(&self, g: &GammaGrid, beta: f64, subset: &[usize]) -> Result<Evaluation> {
        let lambdas: Vec<f64> = subset.iter().map(|&i| self.lambdas[i]).collect();
        let data: Vec<f64> = subset.iter().map(|&i| self.data[i]).collect();
        let r = residuals_1d(g, &self.a, &lambdas, &data)?;
        let j0 = 0.5 * r.iter().map(|x| x * x).collect::<CompensatedSum>().value();
        let reg = g.h1_seminorm_sq(&Weighting::Uniform)?;
        let data_grad = gradient_1d(g, &self.a, &lambdas, &data)?;
        let gradient = full_gradient(data_grad, g, beta, &Weighting::Uniform)?.total;
        Ok(Evaluation { j0, reg, gradient })
    }

    fn n_measurements(&self) -> usize {
        self.lambdas.len()
    }

    fn interval(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

struct Objective2D {
    sys: DirichletSystem,
    measurements: Vec<Measurement2D>,
    weightings: Vec<Weighting>,
    mask: BoundaryMask,
    quadrature: GradientQuadrature,
}

impl Objective for Objective2D {
    fn evaluate(&self, g: &GammaGrid, beta: f64, subset: &[usize]) -> Result<Evaluation> {
        let ms: Vec<Measurement2D> = subset.iter().map(|&i| self.measurements[i].clone()).collect();
        let (j0s, data_grad, _) = evaluate_many_2d(&self.sys, g, &ms, &self.mask, self.quadrature)?;
        let j0 = j0s.into_iter().collect::<CompensatedSum>().value();
        let mut reg = CompensatedSum::new();
        let mut gradient = data_grad;
        for &i in subset {
            let w = &self.weightings[i];
            reg.add(g.h1_seminorm_sq(w)?);
            let reg_grad = full_gradient(vec![0.0; g.n_nodes()], g, beta, w)?.total;
            for (gk, rk) in gradient.iter_mut().zip(reg_grad) {
                *gk += rk;
            }
        }
        Ok(Evaluation {
            j0,
            reg: reg.value(),
            gradient,
        })
    }

    fn n_measurements(&self) -> usize {
        self.measurements.len()
    }

    fn interval(&self) -> (f64, f64) {
        // the error metric of the experiments is taken on (0, 1)
        (0.0, 1.0)
    }
}

/// Fine grid for synthetic data: twice the inversion resolution.
fn data_grid(initial: &GammaGrid, truth: TruthProfile) -> Result<GammaGrid> {
    GammaGrid::from_fn(
        initial.s_lo(),
        initial.s_hi(),
        2 * (initial.n_nodes() - 1) + 1,
        initial.floor(),
        |s| truth.eval(s),
    )
}

fn build_1d(p: &Problem1D, seed: u64) -> Result<(Objective1D, RunMeta)> {
    let fine = data_grid(&p.initial, p.truth)?;
    let clean = p
        .lambdas
        .iter()
        .map(|&l| neumann_exact(&fine, &p.a, l))
        .collect::<Result<Vec<_>>>()?;
    let data = add_noise(&clean, p.noise_eps, seed);
    let meta = RunMeta {
        dimension: 1,
        truth: p.truth.name().into(),
        noise_eps: p.noise_eps,
        seed,
        iterations: 0,
        mesh_ids: vec![format!("x-uniform-{}", p.a.n_cells())],
        data_gamma_nodes: fine.n_nodes(),
        clamp_count: 0,
    };
    Ok((
        Objective1D {
            lambdas: p.lambdas.clone(),
            data,
            a: p.a.clone(),
        },
        meta,
    ))
}

fn build_2d(p: &Problem2D, seed: u64) -> Result<(Objective2D, RunMeta)> {
    if p.xi.is_empty() {
        return Err(Error::InvalidArgument("Ξ must contain at least one amplitude".into()));
    }
    let a = MatrixField::identity();
    let mesh = Arc::new(DiskMesh::build(p.n_refine));
    let fine_mesh = Arc::new(DiskMesh::build(p.n_refine + 1));
    let sys = DirichletSystem::new(mesh.clone(), &a, LinearSolver::Cholesky)?;
    let fine_sys = DirichletSystem::new(fine_mesh.clone(), &a, LinearSolver::Cholesky)?;
    let fine_gamma = data_grid(&p.initial, p.truth)?;
    let mut measurements = Vec::with_capacity(p.xi.len());
    let mut weightings = Vec::with_capacity(p.xi.len());
    for (idx, &k) in p.xi.iter().enumerate() {
        let fine_bc = boundary_data(fine_mesh.clone(), k);
        let fwd = solve_forward_kirchhoff(&fine_sys, &fine_gamma, &fine_bc)?;
        let q = fine_sys.conormal_trace(&fwd.v)?;
        let on_coarse = interpolate_periodic(&fine_mesh.boundary_theta, &q.values, &mesh.boundary_theta);
        let noisy = add_noise_stream(&on_coarse, p.noise_eps, seed, idx as u64);
        let bc = boundary_data(mesh.clone(), k);
        weightings.push(Weighting::coverage_from_loop(&bc.values));
        measurements.push(Measurement2D {
            data: bc.with_values(noisy),
            bc,
        });
    }
    let meta = RunMeta {
        dimension: 2,
        truth: p.truth.name().into(),
        noise_eps: p.noise_eps,
        seed,
        iterations: 0,
        mesh_ids: vec![mesh.id(), fine_mesh.id()],
        data_gamma_nodes: fine_gamma.n_nodes(),
        clamp_count: 0,
    };
    Ok((
        Objective2D {
            sys,
            measurements,
            weightings,
            mask: p.mask.clone(),
            quadrature: p.quadrature,
        },
        meta,
    ))
}

/// Runs the configured optimizer on synthetic data generated from the truth.
pub fn run_reconstruction(
    problem: &Problem,
    config: &OptimConfig,
) -> std::result::Result<Reconstruction, Box<Aborted>> {
    let (initial, truth) = match problem {
        Problem::OneD(p) => (p.initial.clone(), p.truth),
        Problem::TwoD(p) => (p.initial.clone(), p.truth),
    };
    let abort = |error: Error, history: Vec<IterRecord>, last: GammaGrid| Box::new(Aborted { error, history, last });
    if let Err(e) = config.validate() {
        return Err(abort(e, Vec::new(), initial));
    }
    let built: Result<(Box<dyn Objective + Sync>, RunMeta)> = match problem {
        Problem::OneD(p) => build_1d(p, config.seed).map(|(o, m)| (Box::new(o) as Box<dyn Objective + Sync>, m)),
        Problem::TwoD(p) => build_2d(p, config.seed).map(|(o, m)| (Box::new(o) as Box<dyn Objective + Sync>, m)),
    };
    let (objective, mut meta) = match built {
        Ok(b) => b,
        Err(e) => return Err(abort(e, Vec::new(), initial)),
    };
    let floor = config.positivity_floor;
    let mut gamma = match GammaGrid::new(initial.s_lo(), initial.s_hi(), initial.values().to_vec(), floor) {
        Ok(g) => g.project_positive(),
        Err(e) => return Err(abort(e, Vec::new(), initial)),
    };
    let truth = Truth::Profile(truth);
    let n_meas = objective.n_measurements();
    let all: Vec<usize> = (0..n_meas).collect();
    let batch = config.batch.min(n_meas);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(config.seed);
    batch_rng.set_stream(u64::MAX);
    let mut adam = AdamState::new(gamma.n_nodes());
    let mut history = Vec::with_capacity(config.max_iter + 1);

    for iter in 0..=config.max_iter {
        let subset: Vec<usize> = if batch == n_meas {
            all.clone()
        } else {
            rand::seq::index::sample(&mut batch_rng, n_meas, batch).into_vec()
        };
        let eval = match objective.evaluate(&gamma, config.beta_reg, &subset) {
            Ok(e) => e,
            Err(e) => return Err(abort(e, history, gamma)),
        };
        // history always reports the full objective
        let (j0, reg) = if batch == n_meas {
            (eval.j0, eval.reg)
        } else {
            match objective.evaluate(&gamma, config.beta_reg, &all) {
                Ok(e) => (e.j0, e.reg),
                Err(e) => return Err(abort(e, history, gamma)),
            }
        };
        history.push(IterRecord {
            iter,
            j0,
            reg,
            l2_error: l2_error(&gamma, &truth, objective.interval()),
        });
        let stop = config.discrepancy_stop.is_some_and(|d| j0 <= d);
        if iter == config.max_iter || stop {
            meta.iterations = iter;
            break;
        }
        let stepped = match config.method {
            Method::Gd => gd_step(&gamma, &eval.gradient, config.step),
            Method::Adam => adam_step(&gamma, &eval.gradient, &adam, config).map(|(g, s)| {
                adam = s;
                g
            }),
        };
        match stepped {
            Ok(g) => {
                meta.clamp_count += gamma.clamp_count();
                gamma = g;
            }
            Err(e) => return Err(abort(e, history, gamma)),
        }
    }
    meta.clamp_count += gamma.clamp_count();
    Ok(Reconstruction { gamma, history, meta })
}

/// CSV `iter,j0,reg,l2_error`.
pub fn write_history_csv<W: Write>(mut w: W, history: &[IterRecord]) -> Result<()> {
    writeln!(w, "iter,j0,reg,l2_error")?;
    for r in history {
        writeln!(w, "{},{:.17e},{:.17e},{:.17e}", r.iter, r.j0, r.reg, r.l2_error)?;
    }
    Ok(())
}
