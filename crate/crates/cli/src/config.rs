//! Run configuration: a flat TOML file with dotted keys, overridden by flags.

use std::path::{Path, PathBuf};

use quasilin_core::optimize::{default_xi, preset_1d, preset_2d, Gamma1D, DEFAULT_N_REFINE};
use quasilin_core::stability::Exponent;
use quasilin_core::{Method, OptimConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Diagnostic};

/// Finest mesh level accepted; level 7 already has about 200k vertices.
pub const MAX_N_REFINE: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::Subcommand)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Exact and finite-difference 1D forward solves
    Forward1d,
    /// Kirchhoff forward solves on the disk
    Forward2d,
    /// Noisy 1D coefficient reconstruction
    Reconstruct1d,
    /// Multi-measurement 2D coefficient reconstruction
    Reconstruct2d,
    /// Adjoint gradient against central differences
    Gradcheck,
    /// Hölder sweep over optimality pairs
    StabilitySweep,
    /// Monte Carlo check of the variational inequality
    InequalityCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Forward1d => "forward1d",
            Command::Forward2d => "forward2d",
            Command::Reconstruct1d => "reconstruct1d",
            Command::Reconstruct2d => "reconstruct2d",
            Command::Gradcheck => "gradcheck",
            Command::StabilitySweep => "stability-sweep",
            Command::InequalityCheck => "inequality-check",
        }
    }
}

/// Named experiment setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 2D reconstruction with the full amplitude set
    PaperFig1,
    /// 1D reconstruction from noisy Neumann data
    PaperFig2,
}

impl Preset {
    pub fn command(self) -> Command {
        match self {
            Preset::PaperFig1 => Command::Reconstruct2d,
            Preset::PaperFig2 => Command::Reconstruct1d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub preset: Option<Preset>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub noise_eps: f64,
    pub problem1d: Problem1dSection,
    pub problem2d: Problem2dSection,
    pub optim: OptimSection,
    pub stability: StabilitySection,
    pub gradcheck: GradcheckSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            preset: None,
            output_dir: PathBuf::from("out"),
            seed: 0,
            noise_eps: 0.0,
            problem1d: Problem1dSection::default(),
            problem2d: Problem2dSection::default(),
            optim: OptimSection::default(),
            stability: StabilitySection::default(),
            gradcheck: GradcheckSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Problem1dSection {
    pub gamma: Gamma1D,
    /// Dirichlet values at `x = 1`.
    pub lambdas: Vec<f64>,
    /// Cells of the finite-difference oracle.
    pub n_cells: usize,
    /// Values of λ whose full profiles are written.
    pub profile_lambdas: Vec<f64>,
}

impl Default for Problem1dSection {
    fn default() -> Self {
        Self {
            gamma: Gamma1D::Nonsmooth,
            lambdas: (1..=100).map(|k| k as f64 / 100.0).collect(),
            n_cells: 256,
            profile_lambdas: vec![0.25, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Problem2dSection {
    /// Amplitudes of the boundary data.
    pub xi: Vec<f64>,
    pub n_refine: usize,
    /// Also run the Picard oracle in `forward2d`.
    pub picard_check: bool,
}

impl Default for Problem2dSection {
    fn default() -> Self {
        Self {
            xi: default_xi(),
            n_refine: DEFAULT_N_REFINE,
            picard_check: false,
        }
    }
}

/// Optimizer settings; unset fields take the defaults of the dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSection {
    pub method: Option<Method>,
    pub step: Option<f64>,
    pub beta_reg: Option<f64>,
    pub max_iter: Option<usize>,
    pub batch: Option<usize>,
    pub momenta: Option<[f64; 2]>,
    pub adam_eps: Option<f64>,
    pub positivity_floor: Option<f64>,
    pub discrepancy_stop: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    /// Sobolev exponent; `inf` is allowed.
    pub p: f64,
    pub m: f64,
    pub s_lo: Option<f64>,
    pub s_hi: Option<f64>,
    pub s_count: usize,
    /// Exponents for `inequality-check`.
    pub p_values: Vec<f64>,
    pub samples: usize,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            p: 2.0,
            m: 1.0,
            s_lo: None,
            s_hi: None,
            s_count: 12,
            p_values: vec![1.5, 2.0, 3.0, 8.0],
            samples: 10_000,
        }
    }
}

impl StabilitySection {
    /// Default sweep: four decades ending at half the admissible bound.
    fn default_range(&self) -> (f64, f64) {
        let cap = Exponent::new(self.p).map(|e| e.s_cap(self.m)).unwrap_or(f64::NAN);
        (0.5e-4 * cap, 0.5 * cap)
    }

    /// Geometric grid of `s_count` values between the endpoints.
    pub fn s_grid(&self) -> Vec<f64> {
        let (dlo, dhi) = self.default_range();
        let (lo, hi) = (self.s_lo.unwrap_or(dlo), self.s_hi.unwrap_or(dhi));
        let n = self.s_count;
        if n < 2 {
            return vec![lo; n];
        }
        let r = (hi / lo).ln() / (n - 1) as f64;
        (0..n)
            .map(|i| if i == n - 1 { hi } else { lo * (r * i as f64).exp() })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub dimension: usize,
    pub n_refine: usize,
    pub nodes: usize,
    pub step: f64,
    /// Amplitude of the single 2D measurement.
    pub xi: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            dimension: 2,
            n_refine: 3,
            nodes: 21,
            step: 1e-5,
            xi: 1.1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is representable as TOML")
    }

    /// The explicit command, else the preset's.
    pub fn effective_command(&self) -> Option<Command> {
        self.command.or(self.preset.map(Preset::command))
    }

    fn dimension(&self) -> usize {
        match self.effective_command() {
            Some(Command::Forward1d | Command::Reconstruct1d) => 1,
            Some(Command::Gradcheck) => self.gradcheck.dimension,
            _ => 2,
        }
    }

    /// Optimizer settings after applying the overrides to the dimension's defaults.
    pub fn optim_config(&self) -> OptimConfig {
        let mut c = if self.dimension() == 1 {
            preset_1d(self.problem1d.gamma, self.noise_eps).1
        } else {
            preset_2d(self.problem2d.xi.clone(), self.noise_eps).1
        };
        let o = &self.optim;
        if let Some(v) = o.method {
            c.method = v;
        }
        if let Some(v) = o.step {
            c.step = v;
        }
        if let Some(v) = o.beta_reg {
            c.beta_reg = v;
        }
        if let Some(v) = o.max_iter {
            c.max_iter = v;
        }
        c.batch = o.batch.unwrap_or(c.batch).min(self.n_measurements());
        if let Some([a, b]) = o.momenta {
            c.momenta = (a, b);
        }
        if let Some(v) = o.adam_eps {
            c.adam_eps = v;
        }
        if let Some(v) = o.positivity_floor {
            c.positivity_floor = v;
        }
        c.discrepancy_stop = o.discrepancy_stop.or(c.discrepancy_stop);
        c.seed = self.seed;
        c
    }

    fn n_measurements(&self) -> usize {
        if self.dimension() == 1 {
            self.problem1d.lambdas.len()
        } else {
            self.problem2d.xi.len()
        }
    }

    /// Copy with every default that can influence the run written out.
    pub fn resolved(&self) -> RunConfig {
        let mut r = self.clone();
        r.command = self.effective_command();
        if matches!(r.command, Some(Command::Reconstruct1d | Command::Reconstruct2d)) {
            let c = self.optim_config();
            r.optim = OptimSection {
                method: Some(c.method),
                step: Some(c.step),
                beta_reg: Some(c.beta_reg),
                max_iter: Some(c.max_iter),
                batch: Some(c.batch),
                momenta: Some([c.momenta.0, c.momenta.1]),
                adam_eps: Some(c.adam_eps),
                positivity_floor: Some(c.positivity_floor),
                discrepancy_stop: c.discrepancy_stop,
            };
        }
        if r.command == Some(Command::StabilitySweep) {
            let grid = self.stability.s_grid();
            r.stability.s_lo = grid.first().copied();
            r.stability.s_hi = grid.last().copied();
        }
        r
    }

    /// Every violated precondition of the selected command; empty means `run` may proceed.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        let mut bad = |field: &str, message: String| d.push(Diagnostic::new(field, message));
        let Some(command) = self.effective_command() else {
            bad("command", "no command given and no preset selected".into());
            return d;
        };
        if let (Some(p), Some(c)) = (self.preset, self.command) {
            if p.command() != c {
                bad(
                    "preset",
                    format!(
                        "preset {p:?} runs {} but the command is {}",
                        p.command().name(),
                        c.name()
                    ),
                );
            }
        }
        check_output_dir(&self.output_dir, &mut bad);
        if !(self.noise_eps >= 0.0 && self.noise_eps.is_finite()) {
            bad(
                "noise_eps",
                format!("noise_eps must be ≥ 0 and finite, got {}", self.noise_eps),
            );
        }

        let one_d = || {
            matches!(command, Command::Forward1d | Command::Reconstruct1d)
                || (command == Command::Gradcheck && self.gradcheck.dimension == 1)
        };
        let two_d = || matches!(command, Command::Forward2d | Command::Reconstruct2d);
        if one_d() {
            let p = &self.problem1d;
            if p.lambdas.is_empty() {
                bad("problem1d.lambdas", "at least one λ is required".into());
            }
            if let Some(l) = p
                .lambdas
                .iter()
                .chain(&p.profile_lambdas)
                .find(|l| !(0.0..=1.0).contains(*l))
            {
                bad(
                    "problem1d.lambdas",
                    format!("λ = {l} lies outside the coefficient interval [0, 1]"),
                );
            }
            if command == Command::Forward1d && p.n_cells < 4 {
                bad("problem1d.n_cells", format!("need at least 4 cells, got {}", p.n_cells));
            }
        }
        if two_d() {
            let p = &self.problem2d;
            if p.xi.is_empty() {
                bad("problem2d.xi", "at least one amplitude is required".into());
            }
            if let Some(k) = p.xi.iter().find(|k| !(**k > 0.0 && **k <= 2.0)) {
                bad(
                    "problem2d.xi",
                    format!("amplitude {k} outside (0, 2]; g_k must stay inside the coefficient interval [-0.2, 1.8]"),
                );
            }
            if p.n_refine > MAX_N_REFINE {
                bad(
                    "problem2d.n_refine",
                    format!("at most {MAX_N_REFINE}, got {}", p.n_refine),
                );
            }
        }
        if matches!(command, Command::Reconstruct1d | Command::Reconstruct2d) {
            let c = self.optim_config();
            if let Err(e) = c.validate() {
                bad("optim", e.to_string());
            }
            if !(c.step > 0.0 && c.step.is_finite()) {
                bad("optim.step", format!("step must be > 0, got {}", c.step));
            }
            if c.batch == 0 {
                bad("optim.batch", "batch must be ≥ 1".into());
            }
        }
        match command {
            Command::Gradcheck => {
                let g = &self.gradcheck;
                if !matches!(g.dimension, 1 | 2) {
                    bad("gradcheck.dimension", format!("must be 1 or 2, got {}", g.dimension));
                }
                if g.nodes < 2 {
                    bad("gradcheck.nodes", format!("need at least 2 nodes, got {}", g.nodes));
                }
                if !(g.step > 0.0 && g.step < 0.1) {
                    bad("gradcheck.step", format!("step must lie in (0, 0.1), got {}", g.step));
                }
                if g.dimension == 2 {
                    if g.n_refine > MAX_N_REFINE {
                        bad(
                            "gradcheck.n_refine",
                            format!("at most {MAX_N_REFINE}, got {}", g.n_refine),
                        );
                    }
                    if !(g.xi > 0.0 && g.xi <= 2.0) {
                        bad("gradcheck.xi", format!("amplitude {} outside (0, 2]", g.xi));
                    }
                }
            }
            Command::StabilitySweep => self.check_sweep(&mut bad),
            Command::InequalityCheck => {
                let s = &self.stability;
                if s.p_values.is_empty() {
                    bad("stability.p_values", "at least one exponent is required".into());
                }
                if let Some(p) = s.p_values.iter().find(|p| !(**p > 1.0 && p.is_finite())) {
                    bad("stability.p_values", format!("p must lie in (1, ∞), got {p}"));
                }
                if s.samples == 0 {
                    bad("stability.samples", "need at least one sample".into());
                }
            }
            _ => {}
        }
        d
    }

    fn check_sweep(&self, bad: &mut impl FnMut(&str, String)) {
        let s = &self.stability;
        let p = match Exponent::new(s.p) {
            Ok(p) => p,
            Err(_) => {
                bad("stability.p", format!("p must be > 1 (or inf), got {}", s.p));
                return;
            }
        };
        if !(s.m > 0.0 && s.m.is_finite()) {
            bad("stability.m", format!("M must be > 0, got {}", s.m));
            return;
        }
        if s.s_count < 3 {
            bad(
                "stability.s_count",
                format!("need at least 3 values of S, got {}", s.s_count),
            );
        }
        let grid = s.s_grid();
        let (lo, hi) = (
            grid.first().copied().unwrap_or(0.0),
            grid.last().copied().unwrap_or(0.0),
        );
        if !(lo > 0.0) {
            bad("stability.s_lo", format!("S must be > 0, got {lo}"));
        }
        if !(hi > lo) {
            bad("stability.s_hi", format!("need s_lo < s_hi, got {lo} and {hi}"));
        }
        let cap = p.s_cap(s.m);
        if !(hi < cap) {
            bad(
                "stability.s_hi",
                format!("S = {hi} must stay below the bound 2^(-(2p-1)/p) M^((p-1)/p) = {cap}"),
            );
        }
    }
}

fn check_output_dir(dir: &Path, bad: &mut impl FnMut(&str, String)) {
    if dir.as_os_str().is_empty() {
        bad("output_dir", "empty path".into());
        return;
    }
    // nearest existing ancestor decides whether the directory can be created
    let mut probe = Some(dir);
    while let Some(p) = probe {
        if let Ok(meta) = std::fs::metadata(p) {
            if !meta.is_dir() {
                bad("output_dir", format!("{} exists and is not a directory", p.display()));
            } else if meta.permissions().readonly() {
                bad("output_dir", format!("{} is not writable", p.display()));
            }
            return;
        }
        probe = p.parent().filter(|p| !p.as_os_str().is_empty());
    }
}

/// Inclusive arithmetic range `a:step:b`, or a comma-separated list.
pub fn parse_range(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [a, step, b] => {
            let (a, step, b) = (num(a)?, num(step)?, num(b)?);
            if !(step > 0.0) || b < a {
                return Err(format!("range {text} needs a positive step and a ≤ b"));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| a + step * i as f64).collect())
        }
        [_] => text.split(',').map(num).collect(),
        _ => Err(format!("expected a:step:b or a comma list, got {text}")),
    }
}

/// A parsed value list, kept as one flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueList(pub Vec<f64>);

impl From<ValueList> for Vec<f64> {
    fn from(v: ValueList) -> Self {
        v.0
    }
}

pub fn parse_list(text: &str) -> Result<ValueList, String> {
    parse_range(text).map(ValueList)
}

/// `lo:log:hi` or `lo:log:hi:n`: endpoints and count of a geometric grid.
pub fn parse_log_range(text: &str) -> Result<(f64, f64, Option<usize>), String> {
    let parts: Vec<&str> = text.split(':').collect();
    let (lo, hi, n) = match parts.as_slice() {
        [lo, "log", hi] => (lo, hi, None),
        [lo, "log", hi, n] => (lo, hi, Some(n.trim().parse().map_err(|_| format!("bad count {n}"))?)),
        _ => return Err(format!("expected lo:log:hi[:n], got {text}")),
    };
    Ok((num(lo)?, num(hi)?, n))
}

fn num(s: &str) -> Result<f64, String> {
    s.trim().parse().map_err(|_| format!("not a number: {s}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys() {
        let c = RunConfig::from_toml("command = \"reconstruct2d\"\noptim.step = 0.05\nproblem2d.xi = [1.5, 2.0]\n")
            .unwrap();
        assert_eq!(c.optim.step, Some(0.05));
        assert_eq!(c.problem2d.xi, vec![1.5, 2.0]);
        let o = c.optim_config();
        assert_eq!(o.step, 0.05);
        assert_eq!(o.batch, 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("optim.stepp = 1").is_err());
        assert!(RunConfig::from_toml("colour = 1").is_err());
    }

    #[test]
    fn infinite_exponent_round_trips() {
        let c = RunConfig::from_toml("stability.p = inf").unwrap();
        assert_eq!(c.stability.p, f64::INFINITY);
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1.1:0.1:2.0").unwrap().len(), 10);
        assert_eq!(parse_range("1.5,2").unwrap(), vec![1.5, 2.0]);
        assert!(parse_range("2:0.1:1").is_err());
        assert_eq!(parse_log_range("1e-4:log:0.1:5").unwrap(), (1e-4, 0.1, Some(5)));
        assert!(parse_log_range("1e-4:0.1").is_err());
    }

    #[test]
    fn negative_beta_reported() {
        let mut c = RunConfig {
            command: Some(Command::Reconstruct1d),
            ..RunConfig::default()
        };
        c.optim.beta_reg = Some(-0.1);
        let d = c.validate();
        assert!(d.iter().any(|d| d.message.contains("beta_reg must be ≥ 0")), "{d:?}");
    }

    #[test]
    fn sweep_above_cap_reported() {
        let mut c = RunConfig {
            command: Some(Command::StabilitySweep),
            ..RunConfig::default()
        };
        c.stability.s_hi = Some(0.5);
        let d = c.validate();
        assert!(d.iter().any(|d| d.message.contains("2^(-(2p-1)/p)")), "{d:?}");
        c.stability.s_hi = None;
        assert!(c.validate().is_empty());
    }

    #[test]
    fn preset_mismatch_reported() {
        let c = RunConfig {
            command: Some(Command::Reconstruct1d),
            preset: Some(Preset::PaperFig1),
            ..RunConfig::default()
        };
        assert!(c.validate().iter().any(|d| d.field == "preset"));
    }

    #[test]
    fn resolved_fills_optimizer() {
        let c = RunConfig {
            preset: Some(Preset::PaperFig2),
            ..RunConfig::default()
        };
        let r = c.resolved();
        assert_eq!(r.command, Some(Command::Reconstruct1d));
        assert_eq!(r.optim.method, Some(Method::Adam));
        assert_eq!(r.optim.batch, Some(100));
        assert_eq!(RunConfig::from_toml(&r.to_toml()).unwrap(), r);
    }
}
