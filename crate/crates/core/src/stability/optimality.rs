use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coeffspace::GammaGrid;
use crate::error::{Error, Result};
use crate::numerics::fit_slope;

/// Cells of the grid used for the sampled checks.
pub const SAMPLED_CELLS: usize = 10_000;

/// Sobolev exponent `p ∈ (1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    /// `f64::INFINITY` maps to [`Exponent::Infinity`].
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(Exponent::Infinity)
        } else if p > 1.0 && p.is_finite() {
            Ok(Exponent::Finite(p))
        } else {
            Err(Error::InvalidArgument(format!(
                "exponent p must lie in (1, ∞], got {p}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    /// Hölder exponent `(p−1)/(2p−1)`, which is `½` at `p = ∞`.
    pub fn holder(self) -> f64 {
        match self {
            Exponent::Finite(p) => (p - 1.0) / (2.0 * p - 1.0),
            Exponent::Infinity => 0.5,
        }
    }

    /// Upper bound `2^{−(2p−1)/p} M^{(p−1)/p}` on admissible `S`.
    pub fn s_cap(self, m: f64) -> f64 {
        match self {
            Exponent::Finite(p) => 2f64.powf(-(2.0 * p - 1.0) / p) * m.powf((p - 1.0) / p),
            Exponent::Infinity => 0.25 * m,
        }
    }

    /// Expected value of `‖γ₁′‖_p^p` (or of the Lipschitz constant at `p = ∞`).
    fn seminorm_target(self, m: f64) -> f64 {
        match self {
            Exponent::Finite(p) => (0.5 * m).powf(p - 1.0),
            Exponent::Infinity => 0.5 * m,
        }
    }
}

/// Gap, data size and seminorm of an optimality pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalityChecks {
    pub gap: f64,
    pub sup_phi: f64,
    pub seminorm: f64,
}

impl OptimalityChecks {
    /// Largest relative deviation from `other`.
    pub fn max_rel_diff(&self, other: &OptimalityChecks) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        rel(self.gap, other.gap)
            .max(rel(self.sup_phi, other.sup_phi))
            .max(rel(self.seminorm, other.seminorm))
    }
}

/// `γ₂ ≡ 1` and `γ₁ = 1 + H (s − s_c)₊/(1 − s_c)` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityInstance {
    pub p: Exponent,
    pub m: f64,
    pub s: f64,
    pub h: f64,
    pub s_c: f64,
    pub gamma1: GammaGrid,
    pub gamma2: GammaGrid,
    /// Closed-form evaluation of the three identities.
    pub analytic: OptimalityChecks,
    /// The same quantities measured on `gamma1`/`gamma2`.
    pub sampled: OptimalityChecks,
}

impl OptimalityInstance {
    pub fn gamma1_exact(&self, s: f64) -> f64 {
        1.0 + self.h * (s - self.s_c).max(0.0) / (1.0 - self.s_c)
    }

    /// `φ = Γ₁ − Γ₂` with `a ≡ 1`.
    pub fn phi_exact(&self, lambda: f64) -> f64 {
        let t = (lambda - self.s_c).max(0.0);
        self.h * t * t / (2.0 * (1.0 - self.s_c))
    }

    /// The values the identities predict: `H`, `S` and `(M/2)^{p−1}`.
    pub fn expected(&self) -> OptimalityChecks {
        OptimalityChecks {
            gap: self.h,
            sup_phi: self.s,
            seminorm: self.p.seminorm_target(self.m),
        }
    }
}

fn check_admissible(p: Exponent, m: f64, s: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidArgument(format!("M must be > 0, got {m}")));
    }
    let cap = p.s_cap(m);
    if !(s > 0.0 && s < cap) {
        return Err(Error::Precondition(format!(
            "S = {s} violates 0 < S < 2^(-(2p-1)/p) M^((p-1)/p) = {cap} for p = {}, M = {m}",
            p.value()
        )));
    }
    Ok(())
}

/// Builds the pair showing that the exponent `(p−1)/(2p−1)` is sharp.
pub fn build_optimality_pair(p: Exponent, m: f64, s: f64) -> Result<OptimalityInstance> {
    check_admissible(p, m, s)?;
    let h = (m * s).powf(p.holder());
    let s_c = 1.0 - 2.0 * s / h;
    if !(1.0 - s_c > 1e-12) {
        return Err(Error::Precondition(format!(
            "S = {s} is too small: the ramp width 2S/H = {} is below resolution",
            2.0 * s / h
        )));
    }
    let slope = h / (1.0 - s_c);
    let analytic = OptimalityChecks {
        gap: slope * (1.0 - s_c),
        sup_phi: h * (1.0 - s_c) / 2.0,
        seminorm: match p {
            Exponent::Finite(p) => h.powf(p) / (1.0 - s_c).powf(p - 1.0),
            Exponent::Infinity => slope,
        },
    };

    let gamma1 = GammaGrid::from_fn(0.0, 1.0, SAMPLED_CELLS + 1, 0.5, |x| 1.0 + slope * (x - s_c).max(0.0))?;
    let gamma2 = GammaGrid::constant(0.0, 1.0, 2, 1.0, 0.5)?;
    let dx = gamma1.spacing();
    let v = gamma1.values();
    let gap = v.iter().map(|g| (g - 1.0).abs()).fold(0.0, f64::max);
    let sup_phi = gamma1
        .nodes()
        .iter()
        .map(|&l| Ok((gamma1.antiderivative(l)? - l).abs()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let slopes = v.windows(2).map(|w| ((w[1] - w[0]) / dx).abs());
    let seminorm = match p {
        Exponent::Finite(p) => slopes.map(|d| dx * d.powf(p)).sum(),
        Exponent::Infinity => slopes.fold(0.0, f64::max),
    };
    Ok(OptimalityInstance {
        p,
        m,
        s,
        h,
        s_c,
        gamma1,
        gamma2,
        analytic,
        sampled: OptimalityChecks { gap, sup_phi, seminorm },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s: f64,
    pub sup_phi: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub p: Exponent,
    pub m: f64,
    pub slope: f64,
    pub expected: f64,
    pub rows: Vec<SweepRow>,
}

/// Fits `log gap` against `log sup|φ|` over optimality pairs, using the sampled values.
pub fn holder_sweep(p: Exponent, m: f64, s_grid: &[f64]) -> Result<SweepResult> {
    if s_grid.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "Hölder sweep needs at least 3 values of S, got {}",
            s_grid.len()
        )));
    }
    let rows = s_grid
        .iter()
        .map(|&s| {
            let inst = build_optimality_pair(p, m, s)?;
            Ok(SweepRow {
                s,
                sup_phi: inst.sampled.sup_phi,
                gap: inst.sampled.gap,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = rows.iter().map(|r| r.sup_phi.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.gap.ln()).collect();
    Ok(SweepResult {
        p,
        m,
        slope: fit_slope(&x, &y),
        expected: p.holder(),
        rows,
    })
}

/// An admissible `S` at which `gap > c · sup|φ|^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub s: f64,
    pub gap: f64,
    pub sup_phi: f64,
    pub ratio: f64,
}

/// For `q` above the Hölder exponent, finds an optimality pair beating any constant `c`.
pub fn exhibit_violation(p: Exponent, m: f64, q: f64, c: f64) -> Result<Violation> {
    let theta = p.holder();
    if !(q > theta) {
        return Err(Error::InvalidArgument(format!(
            "q = {q} must exceed the Hölder exponent {theta}"
        )));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("c must be > 0, got {c}")));
    }
    // gap / S^q = M^θ S^{θ−q} exceeds c below this threshold
    let threshold = (m.powf(theta) / c).powf(1.0 / (q - theta));
    let s = 0.5 * threshold.min(p.s_cap(m));
    let inst = build_optimality_pair(p, m, s)?;
    let (gap, sup_phi) = (inst.analytic.gap, inst.analytic.sup_phi);
    Ok(Violation {
        s,
        gap,
        sup_phi,
        ratio: gap / sup_phi.powf(q),
    })
}

/// CSV `S,sup_phi,gap_inf_norm`.
pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "S,sup_phi,gap_inf_norm")?;
    for r in rows {
        writeln!(w, "{:.17e},{:.17e},{:.17e}", r.s, r.sup_phi, r.gap)?;
    }
    Ok(())
}
