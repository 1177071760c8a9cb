//! Piecewise-linear representation of the quasilinear coefficient.
//!
//! A [`GammaGrid`] stores nodal values of the coefficient on an equidistant
//! grid over a parameter interval `[s_lo, s_hi]`. Everything that other modules
//! need is closed form on this class: evaluation, the antiderivative anchored
//! at zero, its inverse, hat-basis weights and the H¹ seminorm.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

/// Fractional cell positions closer than this to an integer snap onto the node.
const NODE_SNAP: f64 = 1e-12;

/// Nodal coefficient values on an equidistant grid.
///
/// The grid is an immutable snapshot; all "updates" build a new grid. The only
/// interior mutability is the clamp counter, which records how often an
/// evaluation point fell outside `[s_lo, s_hi]` and was clamped.
#[derive(Debug, Serialize, Deserialize)]
#[serde(try_from = "GammaRecord", into = "GammaRecord")]
pub struct GammaGrid {
    s_lo: f64,
    s_hi: f64,
    values: Vec<f64>,
    floor: f64,
    /// `cumulative[i] = ∫_{s_lo}^{node_i} γ`.
    cumulative: Vec<f64>,
    /// `∫_{s_lo}^{anchor} γ`.
    anchor_offset: f64,
    clamps: AtomicUsize,
}

/// Serialized form of a [`GammaGrid`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GammaRecord {
    pub s_lo: f64,
    pub s_hi: f64,
    pub n_nodes: usize,
    pub values: Vec<f64>,
    pub floor: f64,
}

impl TryFrom<GammaRecord> for GammaGrid {
    type Error = Error;

    fn try_from(r: GammaRecord) -> Result<Self> {
        if r.n_nodes != r.values.len() {
            return Err(Error::InvalidArgument(format!(
                "n_nodes = {} but {} values supplied",
                r.n_nodes,
                r.values.len()
            )));
        }
        GammaGrid::new(r.s_lo, r.s_hi, r.values, r.floor)
    }
}

impl From<GammaGrid> for GammaRecord {
    fn from(g: GammaGrid) -> Self {
        GammaRecord {
            s_lo: g.s_lo,
            s_hi: g.s_hi,
            n_nodes: g.values.len(),
            values: g.values,
            floor: g.floor,
        }
    }
}

impl Clone for GammaGrid {
    fn clone(&self) -> Self {
        Self {
            s_lo: self.s_lo,
            s_hi: self.s_hi,
            values: self.values.clone(),
            floor: self.floor,
            cumulative: self.cumulative.clone(),
            anchor_offset: self.anchor_offset,
            clamps: AtomicUsize::new(self.clamps.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for GammaGrid {
    fn eq(&self, other: &Self) -> bool {
        self.s_lo == other.s_lo && self.s_hi == other.s_hi && self.floor == other.floor && self.values == other.values
    }
}

/// The two active hat functions at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HatWeights {
    pub node_indices: (usize, usize),
    pub weights: (f64, f64),
}

/// How the H¹ seminorm integrates `|γ'|²`.
#[derive(Debug, Clone, PartialEq)]
pub enum Weighting {
    /// Plain seminorm over `[s_lo, s_hi]`.
    Uniform,
    /// Sum of integrals over the listed sub-intervals. Bounds are unordered and
    /// sub-intervals that overlap are counted once per occurrence.
    Coverage(Vec<(f64, f64)>),
}

impl Weighting {
    /// Sub-intervals between consecutive values along a closed boundary loop.
    pub fn coverage_from_loop(values: &[f64]) -> Self {
        let n = values.len();
        Weighting::Coverage((0..n).map(|i| (values[i], values[(i + 1) % n])).collect())
    }
}

impl GammaGrid {
    pub fn new(s_lo: f64, s_hi: f64, values: Vec<f64>, floor: f64) -> Result<Self> {
        if !(s_lo.is_finite() && s_hi.is_finite() && s_lo < s_hi) {
            return Err(Error::InvalidArgument(format!(
                "parameter interval [{s_lo}, {s_hi}] is empty or not finite"
            )));
        }
        if values.len() < 2 {
            return Err(Error::InvalidArgument(
                "a coefficient grid needs at least 2 nodes".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "coefficient value at node {i} is not finite"
            )));
        }
        if !(floor.is_finite() && floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "positivity floor must be > 0, got {floor}"
            )));
        }
        let mut grid = Self {
            s_lo,
            s_hi,
            values,
            floor,
            cumulative: Vec::new(),
            anchor_offset: 0.0,
            clamps: AtomicUsize::new(0),
        };
        grid.rebuild_cumulative();
        Ok(grid)
    }

    /// Samples `f` at `n_nodes` equidistant nodes.
    pub fn from_fn(s_lo: f64, s_hi: f64, n_nodes: usize, floor: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::InvalidArgument(
                "a coefficient grid needs at least 2 nodes".into(),
            ));
        }
        let values = (0..n_nodes).map(|i| f(node_position(s_lo, s_hi, n_nodes, i))).collect();
        Self::new(s_lo, s_hi, values, floor)
    }

    pub fn constant(s_lo: f64, s_hi: f64, n_nodes: usize, value: f64, floor: f64) -> Result<Self> {
        Self::from_fn(s_lo, s_hi, n_nodes, floor, |_| value)
    }

    /// Same geometry and floor, new nodal values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} nodal values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Self::new(self.s_lo, self.s_hi, values, self.floor)
    }

    fn rebuild_cumulative(&mut self) {
        let h = self.spacing();
        let mut acc = CompensatedSum::new();
        self.cumulative = Vec::with_capacity(self.values.len());
        self.cumulative.push(0.0);
        for w in self.values.windows(2) {
            acc.add(0.5 * h * (w[0] + w[1]));
            self.cumulative.push(acc.value());
        }
        let anchor = self.anchor();
        self.anchor_offset = self.cumulative_to(anchor);
    }

    pub fn s_lo(&self) -> f64 {
        self.s_lo
    }

    pub fn s_hi(&self) -> f64 {
        self.s_hi
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn spacing(&self) -> f64 {
        (self.s_hi - self.s_lo) / (self.values.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        node_position(self.s_lo, self.s_hi, self.values.len(), i)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.node(i)).collect()
    }

    /// Point where the antiderivative vanishes: zero when it lies in the
    /// interval, `s_lo` otherwise.
    pub fn anchor(&self) -> f64 {
        if self.s_lo <= 0.0 && 0.0 <= self.s_hi {
            0.0
        } else {
            self.s_lo
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Number of evaluations so far that clamped their argument into the interval.
    pub fn clamp_count(&self) -> usize {
        self.clamps.load(Ordering::Relaxed)
    }

    pub fn reset_clamp_count(&self) {
        self.clamps.store(0, Ordering::Relaxed);
    }

    fn clamp(&self, s: f64) -> f64 {
        if s < self.s_lo {
            self.clamps.fetch_add(1, Ordering::Relaxed);
            self.s_lo
        } else if s > self.s_hi {
            self.clamps.fetch_add(1, Ordering::Relaxed);
            self.s_hi
        } else {
            s
        }
    }

    /// Cell index and fractional position in it for an in-range `s`.
    fn locate(&self, s: f64) -> (usize, f64) {
        let n_cells = self.values.len() - 1;
        let mut u = (s - self.s_lo) / self.spacing();
        let r = u.round();
        if (u - r).abs() < NODE_SNAP * r.abs().max(1.0) {
            u = r;
        }
        let cell = (u.floor().max(0.0) as usize).min(n_cells - 1);
        (cell, (u - cell as f64).clamp(0.0, 1.0))
    }

    /// Linear interpolation; out-of-range arguments are clamped and counted.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if !s.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "coefficient evaluated at non-finite point {s}"
            )));
        }
        Ok(self.value_at(s))
    }

    /// [`eval`](Self::eval) for callers that guarantee a finite argument.
    pub fn value_at(&self, s: f64) -> f64 {
        let (c, t) = self.locate(self.clamp(s));
        self.values[c] + (self.values[c + 1] - self.values[c]) * t
    }

    pub fn hat_at(&self, s: f64) -> Result<HatWeights> {
        if !s.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "hat weights requested at non-finite point {s}"
            )));
        }
        let (c, t) = self.locate(self.clamp(s));
        Ok(HatWeights {
            node_indices: (c, c + 1),
            weights: (1.0 - t, t),
        })
    }

    /// `∫_{s_lo}^{s} γ` for in-range `s`.
    fn cumulative_to(&self, s: f64) -> f64 {
        let (c, _) = self.locate(s);
        let tau = (s - self.node(c)).clamp(0.0, self.spacing());
        let v0 = self.values[c];
        let slope = (self.values[c + 1] - v0) / self.spacing();
        self.cumulative[c] + tau * (v0 + 0.5 * slope * tau)
    }

    fn check_in_range(&self, what: &'static str, s: f64) -> Result<()> {
        if !(s >= self.s_lo && s <= self.s_hi) {
            return Err(Error::Range {
                what,
                value: s,
                lo: self.s_lo,
                hi: self.s_hi,
            });
        }
        Ok(())
    }

    /// Exact antiderivative `Γ(s) = ∫_{anchor}^{s} γ` of the interpolant.
    pub fn antiderivative(&self, s: f64) -> Result<f64> {
        self.check_in_range("antiderivative argument", s)?;
        Ok(self.cumulative_to(s) - self.anchor_offset)
    }

    /// Range `[Γ(s_lo), Γ(s_hi)]` of the antiderivative.
    pub fn antiderivative_range(&self) -> (f64, f64) {
        (
            -self.anchor_offset,
            self.cumulative[self.values.len() - 1] - self.anchor_offset,
        )
    }

    /// Solves `Γ(s) = t` cell-by-cell with the monotone quadratic root.
    pub fn inverse_antiderivative(&self, t: f64) -> Result<f64> {
        if self.min_value() <= 0.0 {
            return Err(Error::Precondition(format!(
                "antiderivative is not invertible: min γ = {} ≤ 0",
                self.min_value()
            )));
        }
        let (lo, hi) = self.antiderivative_range();
        let tol = 8.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1.0);
        if !(t >= lo - tol && t <= hi + tol) {
            return Err(Error::Range {
                what: "antiderivative value",
                value: t,
                lo,
                hi,
            });
        }
        let target = (t + self.anchor_offset).clamp(0.0, self.cumulative[self.values.len() - 1]);
        let n_cells = self.values.len() - 1;
        let c = self
            .cumulative
            .partition_point(|&x| x <= target)
            .saturating_sub(1)
            .min(n_cells - 1);
        let h = self.spacing();
        let v0 = self.values[c];
        let slope = (self.values[c + 1] - v0) / h;
        let r = target - self.cumulative[c];
        // v0 τ + slope τ²/2 = r; the discriminant is γ(s)² > 0 on the monotone branch.
        let disc = (v0 * v0 + 2.0 * slope * r).max(0.0);
        let tau = (2.0 * r / (v0 + disc.sqrt())).clamp(0.0, h);
        Ok((self.node(c) + tau).min(self.s_hi))
    }

    /// Exact `∫_a^b γ` (signed) with per-cell midpoint evaluation, free of
    /// cancellation when `a` and `b` are close. Arguments are clamped.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if a > b {
            return -self.integral(b, a);
        }
        let a = self.clamp(a);
        let b = self.clamp(b);
        if a == b {
            return 0.0;
        }
        let (ca, _) = self.locate(a);
        let (cb, _) = self.locate(b);
        let piece = |x0: f64, x1: f64| (x1 - x0) * self.value_at(0.5 * (x0 + x1));
        if ca == cb {
            return piece(a, b);
        }
        let mut acc = CompensatedSum::new();
        acc.add(piece(a, self.node(ca + 1)));
        acc.add(self.cumulative[cb] - self.cumulative[ca + 1]);
        acc.add(piece(self.node(cb), b));
        acc.value()
    }

    /// Average of γ over `[a, b]`; `γ(a)` when the interval is degenerate.
    pub fn mean_value(&self, a: f64, b: f64) -> f64 {
        if a == b {
            self.value_at(a)
        } else {
            self.integral(a, b) / (b - a)
        }
    }

    /// Adds `scale · ∂Γ(s)/∂values[k] = scale · ∫_{anchor}^{s} h_k` into `out[k]`.
    pub fn add_antiderivative_sensitivity(&self, s: f64, scale: f64, out: &mut [f64]) {
        let anchor = self.anchor();
        let s = self.clamp(s);
        let (a, b, sign) = if s >= anchor {
            (anchor, s, scale)
        } else {
            (s, anchor, -scale)
        };
        if a == b {
            return;
        }
        let h = self.spacing();
        let (ca, _) = self.locate(a);
        let (cb, _) = self.locate(b);
        for c in ca..=cb {
            let x0 = self.node(c);
            let lo = (a.max(x0) - x0).clamp(0.0, h);
            let hi = (b.min(x0 + h) - x0).clamp(0.0, h);
            if hi <= lo {
                continue;
            }
            // ∫_lo^hi (1 - τ/h) dτ and ∫_lo^hi τ/h dτ
            let right = (hi * hi - lo * lo) / (2.0 * h);
            let left = (hi - lo) - right;
            out[c] += sign * left;
            out[c + 1] += sign * right;
        }
    }

    /// Dense vector of `∫_{anchor}^{s} h_k` over all nodes.
    pub fn antiderivative_sensitivity(&self, s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        self.add_antiderivative_sensitivity(s, 1.0, &mut out);
        out
    }

    /// Integration length attributed to each cell by a weighting.
    pub fn cell_weights(&self, weighting: &Weighting) -> Result<Vec<f64>> {
        let h = self.spacing();
        let n_cells = self.n_nodes() - 1;
        match weighting {
            Weighting::Uniform => Ok(vec![h; n_cells]),
            Weighting::Coverage(intervals) => {
                if intervals.is_empty() {
                    return Err(Error::InvalidArgument(
                        "coverage weighting needs at least one sub-interval".into(),
                    ));
                }
                let mut w = vec![0.0; n_cells];
                for &(p, q) in intervals {
                    if !(p.is_finite() && q.is_finite()) {
                        return Err(Error::InvalidArgument(
                            "coverage sub-interval has a non-finite bound".into(),
                        ));
                    }
                    let a = p.min(q).max(self.s_lo);
                    let b = p.max(q).min(self.s_hi);
                    if b <= a {
                        continue;
                    }
                    let (ca, _) = self.locate(a);
                    let (cb, _) = self.locate(b);
                    for (c, wc) in w.iter_mut().enumerate().take(cb + 1).skip(ca) {
                        let x0 = self.node(c);
                        let len = b.min(x0 + h) - a.max(x0);
                        if len > 0.0 {
                            *wc += len;
                        }
                    }
                }
                Ok(w)
            }
        }
    }

    /// Exact `∫ |γ'|²` under the given weighting.
    pub fn h1_seminorm_sq(&self, weighting: &Weighting) -> Result<f64> {
        let w = self.cell_weights(weighting)?;
        let h = self.spacing();
        Ok(self
            .values
            .windows(2)
            .zip(&w)
            .map(|(v, wc)| {
                let slope = (v[1] - v[0]) / h;
                wc * slope * slope
            })
            .collect::<CompensatedSum>()
            .value())
    }

    /// Gradient of [`h1_seminorm_sq`](Self::h1_seminorm_sq) with respect to the nodal values.
    pub fn seminorm_gradient(&self, weighting: &Weighting) -> Result<Vec<f64>> {
        let w = self.cell_weights(weighting)?;
        let h = self.spacing();
        let mut grad = vec![0.0; self.n_nodes()];
        for (c, wc) in w.iter().enumerate() {
            let slope = (self.values[c + 1] - self.values[c]) / h;
            let d = 2.0 * wc * slope / h;
            grad[c] -= d;
            grad[c + 1] += d;
        }
        Ok(grad)
    }

    /// Clips values from below at the positivity floor.
    pub fn project_positive(&self) -> GammaGrid {
        let values = self.values.iter().map(|v| v.max(self.floor)).collect();
        Self::new(self.s_lo, self.s_hi, values, self.floor).expect("projection preserves grid validity")
    }

    /// Structured text record (TOML) `{s_lo, s_hi, n_nodes, values, floor}`.
    pub fn to_record(&self) -> String {
        toml::to_string(&GammaRecord::from(self.clone())).expect("grid record serializes")
    }

    /// CSV `s,gamma`, one row per node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,gamma")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.17e},{v:.17e}", self.node(i))?;
        }
        Ok(())
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let rec: GammaRecord = toml::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        rec.try_into()
    }
}

fn node_position(s_lo: f64, s_hi: f64, n: usize, i: usize) -> f64 {
    if i + 1 == n {
        s_hi
    } else {
        s_lo + (s_hi - s_lo) * i as f64 / (n - 1) as f64
    }
}
