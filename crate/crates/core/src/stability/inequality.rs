use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

/// Nodes of each random Monte Carlo profile.
pub const MC_NODES: usize = 64;

/// Relative slack tolerated before a sample counts as a violation.
const SLACK: f64 = 1e-12;

/// Continuous piecewise-linear function through `(nodes[i], values[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledProfile {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledProfile {
    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Exact `∫|f|` for nonnegative `f`.
    pub fn l1(&self) -> f64 {
        self.cells()
            .map(|(dx, a, b)| 0.5 * dx * (a.abs() + b.abs()))
            .collect::<CompensatedSum>()
            .value()
    }

    /// Exact `Σ Δs |slope|^p`.
    pub fn fp(&self, p: f64) -> Result<f64> {
        if !(p > 1.0) {
            return Err(Error::InvalidArgument(format!("p must be > 1, got {p}")));
        }
        Ok(self
            .cells()
            .map(|(dx, a, b)| dx * ((b - a) / dx).abs().powf(p))
            .collect::<CompensatedSum>()
            .value())
    }

    fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.nodes
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| (x[1] - x[0], v[0], v[1]))
    }

    /// `f ≥ 0`, zero at one end of the interval, and not identically zero.
    pub fn check_admissible(&self) -> Result<()> {
        let n = self.nodes.len();
        if n < 2 || self.values.len() != n {
            return Err(Error::Precondition(format!(
                "profile needs matching nodes and values (at least 2), got {} and {}",
                n,
                self.values.len()
            )));
        }
        if !self.nodes.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Precondition("profile nodes must increase strictly".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Precondition(format!(
                "profile must be finite and ≥ 0, found {v}"
            )));
        }
        if self.values[0].min(self.values[n - 1]) != 0.0 {
            return Err(Error::Precondition(
                "profile must vanish at one end of the interval".into(),
            ));
        }
        if self.sup() == 0.0 {
            return Err(Error::Precondition("profile is identically zero".into()));
        }
        Ok(())
    }
}

/// `((p−1)/(2p−1))^{p−1} H^{2p−1} / S^{p−1}`.
pub fn bound_rhs(h: f64, s: f64, p: f64) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("p must lie in (1, ∞), got {p}")));
    }
    if !(h > 0.0 && s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "H and S must be > 0, got H = {h}, S = {s}"
        )));
    }
    // logs keep H^{2p−1} and S^{p−1} from overflowing at large p
    let log = (p - 1.0) * ((p - 1.0) / (2.0 * p - 1.0)).ln() + (2.0 * p - 1.0) * h.ln() - (p - 1.0) * s.ln();
    Ok(log.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

/// Checks `bound_rhs(‖f‖_∞, ‖f‖₁, p) ≤ ‖f′‖_p^p` up to a `1e−12` relative slack.
pub fn verify_inequality(f: &SampledProfile, p: f64) -> Result<InequalityCheck> {
    f.check_admissible()?;
    let lhs = f.fp(p)?;
    let rhs = bound_rhs(f.sup(), f.l1(), p)?;
    Ok(InequalityCheck {
        holds: lhs + SLACK * lhs.max(rhs) >= rhs,
        lhs,
        rhs,
        slack: lhs - rhs,
    })
}

/// Random admissible profile on a random sub-interval of `[0, 1]`.
///
/// Values are uniform on `[−½, 1]` clipped at zero, so flat zero stretches
/// are common; a random amplitude spreads `H` over four decades.
pub fn random_admissible<R: Rng>(rng: &mut R, n_nodes: usize) -> SampledProfile {
    loop {
        let a: f64 = rng.random_range(0.0..0.9);
        let b: f64 = rng.random_range(a + 0.05..=1.0);
        let mut nodes: Vec<f64> = (0..n_nodes - 2).map(|_| rng.random_range(a..b)).collect();
        nodes.push(a);
        nodes.push(b);
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let amp = 10f64.powf(rng.random_range(-2.0..2.0));
        let mut values: Vec<f64> = nodes
            .iter()
            .map(|_| amp * rng.random_range(-0.5f64..1.0).max(0.0))
            .collect();
        let n = values.len();
        if rng.random_bool(0.5) {
            values[0] = 0.0;
        } else {
            values[n - 1] = 0.0;
        }
        let f = SampledProfile { nodes, values };
        if f.check_admissible().is_ok() {
            return f;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityRow {
    pub sample_id: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub p: f64,
    pub samples: usize,
    pub violations: usize,
    /// Smallest `lhs / rhs` seen.
    pub min_ratio: f64,
    pub rows: Vec<InequalityRow>,
}

/// Checks the inequality on `samples` random profiles.
///
/// Sample `i` draws from its own stream of the seed, so the report does not
/// depend on how the work is split between threads.
pub fn monte_carlo_inequality(p: f64, samples: usize, seed: u64) -> Result<InequalityReport> {
    let rows = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let f = random_admissible(&mut rng, MC_NODES);
            let c = verify_inequality(&f, p)?;
            Ok((
                InequalityRow {
                    sample_id: i,
                    lhs: c.lhs,
                    rhs: c.rhs,
                    slack: c.slack,
                },
                c.holds,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InequalityReport {
        p,
        samples,
        violations: rows.iter().filter(|r| !r.1).count(),
        min_ratio: rows.iter().map(|r| r.0.lhs / r.0.rhs).fold(f64::INFINITY, f64::min),
        rows: rows.into_iter().map(|r| r.0).collect(),
    })
}

/// CSV `sample_id,lhs,rhs,slack`.
pub fn write_inequality_csv<W: Write>(mut w: W, rows: &[InequalityRow]) -> Result<()> {
    writeln!(w, "sample_id,lhs,rhs,slack")?;
    for r in rows {
        writeln!(w, "{},{:.17e},{:.17e},{:.17e}", r.sample_id, r.lhs, r.rhs, r.slack)?;
    }
    Ok(())
}
