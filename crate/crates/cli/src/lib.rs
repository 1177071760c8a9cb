//! Command-line front end: configuration, validation, experiment pipelines
//! and reproducible artifact directories.

// `!(x > y)` checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;

use std::path::PathBuf;

use clap::Parser;
use quasilin_core::optimize::Gamma1D;
use quasilin_core::Method;

pub use config::{Command, Preset, RunConfig};
pub use error::{CliError, Diagnostic, ErrorRecord};
pub use pipeline::run;

#[derive(Debug, Parser)]
#[command(
    name = "quasilin",
    version,
    about = "Forward solves, reconstructions and stability checks for quasilinear coefficient identification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub flags: Flags,
}

/// Overrides applied on top of the configuration file.
#[derive(Debug, Default, clap::Args)]
pub struct Flags {
    /// TOML configuration file with dotted keys
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Multiplicative noise level
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    /// Boundary amplitudes as a:step:b or a comma list
    #[arg(long, global = true, value_parser = config::parse_list)]
    pub xi: Option<config::ValueList>,
    /// Dirichlet values of the 1D problem as a:step:b or a comma list
    #[arg(long, global = true, value_parser = config::parse_list)]
    pub lambda: Option<config::ValueList>,
    #[arg(long, global = true, value_parser = parse_gamma)]
    pub gamma: Option<Gamma1D>,
    /// Sweep of the data mass as lo:log:hi or lo:log:hi:n
    #[arg(long = "S", global = true, value_parser = config::parse_log_range)]
    pub s_range: Option<(f64, f64, Option<usize>)>,
    /// Sobolev exponent (a number above 1, or inf)
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub p: Option<f64>,
    /// Upper bound on the seminorm
    #[arg(long = "M", global = true, allow_negative_numbers = true)]
    pub m: Option<f64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true, value_parser = parse_method)]
    pub method: Option<Method>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub step: Option<f64>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    #[arg(long, global = true)]
    pub n_refine: Option<usize>,
    /// Dimension checked by gradcheck
    #[arg(long, global = true)]
    pub dimension: Option<usize>,
}

fn parse_gamma(s: &str) -> Result<Gamma1D, String> {
    match s {
        "nonsmooth" => Ok(Gamma1D::Nonsmooth),
        "smooth" => Ok(Gamma1D::Smooth),
        _ => Err(format!("expected nonsmooth or smooth, got {s}")),
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "gd" => Ok(Method::Gd),
        "adam" => Ok(Method::Adam),
        _ => Err(format!("expected gd or adam, got {s}")),
    }
}

impl Cli {
    /// File values first, then flags; the subcommand wins over any file `command`.
    pub fn into_config(self) -> Result<RunConfig, CliError> {
        let mut c = match &self.flags.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if self.command.is_some() {
            c.command = self.command;
        }
        self.flags.apply(&mut c);
        Ok(c)
    }
}

impl Flags {
    pub fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($flag:expr => $($target:tt)+) => {
                if let Some(v) = $flag.clone() {
                    $($target)+ = v.into();
                }
            };
        }
        set!(self.output => c.output_dir);
        set!(self.seed => c.seed);
        set!(self.eps => c.noise_eps);
        set!(self.preset => c.preset);
        set!(self.xi => c.problem2d.xi);
        set!(self.lambda => c.problem1d.lambdas);
        set!(self.gamma => c.problem1d.gamma);
        set!(self.p => c.stability.p);
        set!(self.m => c.stability.m);
        set!(self.samples => c.stability.samples);
        set!(self.method => c.optim.method);
        set!(self.max_iter => c.optim.max_iter);
        set!(self.beta => c.optim.beta_reg);
        set!(self.step => c.optim.step);
        set!(self.batch => c.optim.batch);
        set!(self.dimension => c.gradcheck.dimension);
        if let Some(r) = self.n_refine {
            c.problem2d.n_refine = r;
            c.gradcheck.n_refine = r;
        }
        if let Some((lo, hi, n)) = self.s_range {
            c.stability.s_lo = Some(lo);
            c.stability.s_hi = Some(hi);
            if let Some(n) = n {
                c.stability.s_count = n;
            }
        }
    }
}
