//! One-dimensional forward problem `(γ(u) a(x) u')' = 0`, `u(0) = 0`, `u(1) = λ`.
//!
//! The exact path composes the inverse antiderivative of γ with the
//! resistivity integral `A(x) = ∫₀ˣ 1/a`. A Picard finite-difference solver
//! serves as an independent oracle.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coeffspace::GammaGrid;
use crate::error::{Error, Result};
use crate::numerics::{solve_tridiagonal, CompensatedSum};

/// Picard iteration cap for [`solve_forward_fd`].
pub const FD_MAX_ITER: usize = 200;
/// Max-norm increment at which the Picard iteration stops.
pub const FD_TOLERANCE: f64 = 1e-12;

/// Positive coefficient `a(x)` sampled on a uniform grid of `[0, 1]`.
///
/// Between samples `a` is linear. Integrals of `1/a` use the quadratic
/// interpolant of the reciprocal samples (composite Simpson), and the cumulative
/// integral `A(x)` uses the very same interpolant so that `A(1) = c_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient1D {
    samples: Vec<f64>,
    c_a: f64,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl Coefficient1D {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument("a(x) needs at least 2 samples".into()));
        }
        if let Some(i) = samples.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Precondition(format!(
                "a(x) sample {i} is {} but must be > 0",
                samples[i]
            )));
        }
        let mut a = Self {
            samples,
            c_a: 0.0,
            cumulative: Vec::new(),
        };
        a.cumulative = (0..a.samples.len()).map(|i| a.integral_to_node(i)).collect();
        a.c_a = *a.cumulative.last().unwrap();
        Ok(a)
    }

    /// Samples `f` at `n_cells + 1` uniform nodes.
    pub fn from_fn(n_cells: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::InvalidArgument("a(x) needs at least 1 cell".into()));
        }
        Self::new((0..=n_cells).map(|i| f(i as f64 / n_cells as f64)).collect())
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![value, value])
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn n_cells(&self) -> usize {
        self.samples.len() - 1
    }

    fn spacing(&self) -> f64 {
        1.0 / self.n_cells() as f64
    }

    /// `∫₀¹ 1/a`.
    pub fn c_a(&self) -> f64 {
        self.c_a
    }

    /// Piecewise-linear value of `a` at `x ∈ [0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let (i, t) = self.locate(x);
        self.samples[i] + (self.samples[i + 1] - self.samples[i]) * t
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let u = x.clamp(0.0, 1.0) * self.n_cells() as f64;
        let i = (u.floor() as usize).min(self.n_cells() - 1);
        (i, u - i as f64)
    }

    /// Quadratic panel serving cell `i`: first node and offset of the cell in it.
    fn panel(&self, i: usize) -> Option<(usize, usize)> {
        let n = self.n_cells();
        if n == 1 {
            None
        } else if n % 2 == 1 && i == n - 1 {
            Some((n - 2, 1))
        } else {
            Some((i - i % 2, i % 2))
        }
    }

    /// `∫ 1/a` over the first `xi` local cell widths of the panel at `base`.
    fn panel_antiderivative(&self, base: usize, xi: f64) -> f64 {
        let f0 = 1.0 / self.samples[base];
        let f1 = 1.0 / self.samples[base + 1];
        let f2 = 1.0 / self.samples[base + 2];
        let d1 = f1 - f0;
        let d2 = f2 - 2.0 * f1 + f0;
        self.spacing() * (f0 * xi + 0.5 * d1 * xi * xi + 0.5 * d2 * (xi * xi * xi / 3.0 - 0.5 * xi * xi))
    }

    /// `∫` of the reciprocal interpolant over cell `i` from its left end to local fraction `t`.
    fn cell_integral(&self, i: usize, t: f64) -> f64 {
        match self.panel(i) {
            None => {
                let f0 = 1.0 / self.samples[0];
                let f1 = 1.0 / self.samples[1];
                self.spacing() * (f0 * t + 0.5 * (f1 - f0) * t * t)
            }
            Some((base, off)) => {
                let off = off as f64;
                self.panel_antiderivative(base, off + t) - self.panel_antiderivative(base, off)
            }
        }
    }

    fn integral_to_node(&self, i: usize) -> f64 {
        let mut acc = CompensatedSum::new();
        let mut c = 0;
        while c < i {
            match self.panel(c) {
                Some((base, 0)) if c + 1 < i && self.panel(c + 1) == Some((base, 1)) => {
                    acc.add(self.panel_antiderivative(base, 2.0));
                    c += 2;
                }
                _ => {
                    acc.add(self.cell_integral(c, 1.0));
                    c += 1;
                }
            }
        }
        acc.value()
    }

    /// `A(x) = ∫₀ˣ 1/a` for `x ∈ [0, 1]`.
    pub fn resistivity_integral(&self, x: f64) -> f64 {
        if x >= 1.0 {
            return self.c_a;
        }
        let (i, t) = self.locate(x);
        self.cumulative[i] + self.cell_integral(i, t)
    }
}

/// Computes `c_a = ∫₀¹ 1/a` by composite Simpson on the sample grid.
pub fn compute_ca(a: &Coefficient1D) -> f64 {
    a.c_a()
}

/// Discrete solution of the 1D problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution1D {
    pub x_grid: Vec<f64>,
    pub u: Vec<f64>,
    /// The constant flux `γ(u) a u'`.
    pub flux: f64,
    pub lambda: f64,
    /// Picard iterations used (zero for the exact path).
    pub iterations: usize,
}

impl Solution1D {
    /// Midpoint-rule fluxes `γ(ū) a(x̄) Δu/Δx` on each cell.
    pub fn cell_fluxes(&self, g: &GammaGrid, a: &Coefficient1D) -> Vec<f64> {
        self.x_grid
            .windows(2)
            .zip(self.u.windows(2))
            .map(|(x, u)| {
                let xm = 0.5 * (x[0] + x[1]);
                g.value_at(0.5 * (u[0] + u[1])) * a.eval(xm) * (u[1] - u[0]) / (x[1] - x[0])
            })
            .collect()
    }

    /// Writes the profile as CSV with header `x,u`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,u")?;
        for (x, u) in self.x_grid.iter().zip(&self.u) {
            writeln!(w, "{x:.17e},{u:.17e}")?;
        }
        Ok(())
    }
}

fn check_problem(g: &GammaGrid, lambda: f64) -> Result<()> {
    if !(g.s_lo() <= 0.0 && 0.0 <= g.s_hi()) {
        return Err(Error::Precondition(format!(
            "the coefficient interval [{}, {}] must contain the boundary value 0",
            g.s_lo(),
            g.s_hi()
        )));
    }
    if !(lambda >= 0.0 && lambda <= g.s_hi()) {
        return Err(Error::Range {
            what: "lambda",
            value: lambda,
            lo: 0.0,
            hi: g.s_hi(),
        });
    }
    let h = g.spacing();
    let last = (((lambda - g.s_lo()) / h).ceil() as usize).min(g.n_nodes() - 1);
    let first = ((-g.s_lo() / h).floor() as usize).min(g.n_nodes() - 1);
    let min = g.values()[first..=last].iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(Error::Precondition(format!(
            "γ must be positive on [0, {lambda}], found nodal value {min}"
        )));
    }
    Ok(())
}

/// Neumann data `φ(λ) = Γ(λ) / c_a`.
pub fn neumann_exact(g: &GammaGrid, a: &Coefficient1D, lambda: f64) -> Result<f64> {
    check_problem(g, lambda)?;
    Ok(g.antiderivative(lambda)? / a.c_a())
}

/// Exact solution `u(x) = Γ⁻¹(c₁ A(x))` with `c₁ = Γ(λ)/c_a`.
pub fn solve_forward_exact(g: &GammaGrid, a: &Coefficient1D, lambda: f64, x_grid: &[f64]) -> Result<Solution1D> {
    check_problem(g, lambda)?;
    if x_grid.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidArgument("x grid must lie in [0, 1]".into()));
    }
    let gamma_lambda = g.antiderivative(lambda)?;
    let c1 = gamma_lambda / a.c_a();
    let u = x_grid
        .iter()
        .map(|&x| {
            if x == 0.0 {
                Ok(0.0)
            } else if x == 1.0 {
                Ok(lambda)
            } else {
                let t = (c1 * a.resistivity_integral(x)).clamp(0.0, gamma_lambda);
                Ok(g.inverse_antiderivative(t)?.clamp(0.0, lambda))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Solution1D {
        x_grid: x_grid.to_vec(),
        u,
        flux: c1,
        lambda,
        iterations: 0,
    })
}

/// Uniform grid of `[0, 1]` with `n_cells` cells.
pub fn uniform_grid(n_cells: usize) -> Vec<f64> {
    (0..=n_cells)
        .map(|i| if i == n_cells { 1.0 } else { i as f64 / n_cells as f64 })
        .collect()
}

/// Three-point finite-difference oracle solved by Picard iteration.
///
/// Cell conductances are `γ((u_i + u_{i+1})/2) · a(x_{i+1/2})`; each sweep
/// freezes them at the previous iterate and solves the tridiagonal system.
/// Successive sweeps are combined by Anderson mixing.
pub fn solve_forward_fd(g: &GammaGrid, a: &Coefficient1D, lambda: f64, n_cells: usize) -> Result<Solution1D> {
    check_problem(g, lambda)?;
    if n_cells < 4 {
        return Err(Error::InvalidArgument(format!(
            "the finite-difference oracle needs at least 4 cells, got {n_cells}"
        )));
    }
    let x = uniform_grid(n_cells);
    let dx = 1.0 / n_cells as f64;
    let a_mid: Vec<f64> = x.windows(2).map(|w| a.eval(0.5 * (w[0] + w[1]))).collect();
    let m = n_cells - 1;
    let full = |interior: &[f64]| {
        let mut u = Vec::with_capacity(n_cells + 1);
        u.push(0.0);
        u.extend_from_slice(interior);
        u.push(lambda);
        u
    };
    // one Picard sweep: freeze conductances at `u`, solve for the interior
    let sweep = |u: &[f64]| {
        let k: Vec<f64> = (0..n_cells)
            .map(|i| g.value_at(0.5 * (u[i] + u[i + 1])) * a_mid[i])
            .collect();
        let mut sub = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut sup = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for j in 0..m {
            // unknown j is node j + 1
            diag[j] = k[j] + k[j + 1];
            if j > 0 {
                sub[j] = -k[j];
            }
            if j + 1 < m {
                sup[j] = -k[j + 1];
            } else {
                rhs[j] = k[j + 1] * lambda;
            }
        }
        solve_tridiagonal(&sub, &diag, &sup, &rhs)
    };

    let mut iterate: Vec<f64> = x[1..n_cells].iter().map(|xi| lambda * xi).collect();
    let mut mixer = Anderson::new(ANDERSON_DEPTH);
    let mut history = Vec::new();
    for iter in 1..=FD_MAX_ITER {
        let next = sweep(&full(&iterate));
        let change = next
            .iter()
            .zip(&iterate)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        history.push(change);
        if change < FD_TOLERANCE {
            // the returned profile is a plain sweep, which keeps the discrete maximum principle
            let u = full(&next);
            let flux = g.value_at(0.5 * (u[m] + u[n_cells])) * a_mid[n_cells - 1] * (u[n_cells] - u[m]) / dx;
            return Ok(Solution1D {
                x_grid: x,
                u,
                flux,
                lambda,
                iterations: iter,
            });
        }
        iterate = mixer.mix(&iterate, next);
        for v in &mut iterate {
            *v = v.clamp(0.0, lambda);
        }
    }
    Err(Error::Convergence {
        solver: "1D Picard",
        iterations: FD_MAX_ITER,
        residual: *history.last().unwrap(),
        history,
    })
}

/// Picard sweeps remembered by the Anderson mixer.
const ANDERSON_DEPTH: usize = 5;

/// Anderson acceleration of a fixed-point map `x ↦ G(x)`.
///
/// Plain frozen-coefficient sweeps cycle when γ varies sharply between
/// nodes; mixing the last few sweeps removes the cycle without changing the
/// fixed point.
struct Anderson {
    depth: usize,
    last: Option<(Vec<f64>, Vec<f64>)>,
    d_g: VecDeque<Vec<f64>>,
    d_f: VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            last: None,
            d_g: VecDeque::new(),
            d_f: VecDeque::new(),
        }
    }

    /// Next iterate from the current one and its image `g = G(x)`.
    fn mix(&mut self, x: &[f64], g: Vec<f64>) -> Vec<f64> {
        let f: Vec<f64> = g.iter().zip(x).map(|(a, b)| a - b).collect();
        if let Some((g_old, f_old)) = self.last.take() {
            self.d_g.push_back(g.iter().zip(&g_old).map(|(a, b)| a - b).collect());
            self.d_f.push_back(f.iter().zip(&f_old).map(|(a, b)| a - b).collect());
            if self.d_g.len() > self.depth {
                self.d_g.pop_front();
                self.d_f.pop_front();
            }
        }
        let coef = least_squares(&self.d_f, &f);
        let mut out = g.clone();
        for (c, dg) in coef.iter().zip(&self.d_g) {
            for (o, d) in out.iter_mut().zip(dg) {
                *o -= c * d;
            }
        }
        self.last = Some((g, f));
        out
    }
}

/// `argmin_c ‖f − Σ c_j cols_j‖` through regularized normal equations.
fn least_squares(cols: &VecDeque<Vec<f64>>, f: &[f64]) -> Vec<f64> {
    let k = cols.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut m = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            m[i][j] = dot(&cols[i], &cols[j]);
        }
        m[i][k] = dot(&cols[i], f);
    }
    let trace: f64 = (0..k).map(|i| m[i][i]).sum();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] += 1e-12 * trace;
    }
    // Gaussian elimination with partial pivoting
    for c in 0..k {
        let p = (c..k).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, p);
        if m[c][c] == 0.0 {
            return vec![0.0; k];
        }
        for r in c + 1..k {
            let factor = m[r][c] / m[c][c];
            for j in c..=k {
                m[r][j] -= factor * m[c][j];
            }
        }
    }
    let mut out = vec![0.0; k];
    for c in (0..k).rev() {
        let tail: f64 = (c + 1..k).map(|j| m[c][j] * out[j]).sum();
        out[c] = (m[c][k] - tail) / m[c][c];
    }
    out
}

/// Writes a `lambda,phi` table.
pub fn write_neumann_csv<W: Write>(mut w: W, lambdas: &[f64], phi: &[f64]) -> Result<()> {
    writeln!(w, "lambda,phi")?;
    for (l, p) in lambdas.iter().zip(phi) {
        writeln!(w, "{l:.17e},{p:.17e}")?;
    }
    Ok(())
}
