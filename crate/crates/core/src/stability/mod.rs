//! Numerical checks of the stability theory: direct 1D inversion, the
//! optimal-exponent pair, minimizer profiles and the variational inequality.

mod inequality;
mod optimality;
mod profile;

pub use inequality::{
    bound_rhs, monte_carlo_inequality, random_admissible, verify_inequality, write_inequality_csv, InequalityCheck,
    InequalityReport, InequalityRow, SampledProfile, MC_NODES,
};
pub use optimality::{
    build_optimality_pair, exhibit_violation, holder_sweep, write_sweep_csv, Exponent, OptimalityChecks,
    OptimalityInstance, SweepResult, SweepRow, Violation, SAMPLED_CELLS,
};
pub use profile::{functional_fp, minimizer_profile, write_profile_csv, MinimizerProfile, ProfileForm, ProfileRef};

use crate::coeffspace::GammaGrid;
use crate::error::{Error, Result};

/// Recovers `γ = c_a φ′` from Neumann data on a uniform `λ` grid.
///
/// Central differences inside, second-order one-sided stencils at the ends.
pub fn direct_invert_1d(phi: &[f64], lambda_lo: f64, d_lambda: f64, c_a: f64, floor: f64) -> Result<GammaGrid> {
    let n = phi.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "direct inversion needs at least 3 samples, got {n}"
        )));
    }
    if !(d_lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("Δλ must be > 0, got {d_lambda}")));
    }
    let inv = c_a / (2.0 * d_lambda);
    let mut gamma = Vec::with_capacity(n);
    gamma.push(inv * (-3.0 * phi[0] + 4.0 * phi[1] - phi[2]));
    for i in 1..n - 1 {
        gamma.push(inv * (phi[i + 1] - phi[i - 1]));
    }
    gamma.push(inv * (3.0 * phi[n - 1] - 4.0 * phi[n - 2] + phi[n - 3]));
    let hi = lambda_lo + d_lambda * (n - 1) as f64;
    GammaGrid::new(lambda_lo, hi, gamma, floor)
}
