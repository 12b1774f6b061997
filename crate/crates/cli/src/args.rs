use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Numerical laboratory for a prime Diophantine inequality.
///
/// Numbers are read as exact strings: integers, decimals (`1e6`, `0.25`),
/// rationals (`21/20`) or surds (`1+2*sqrt(3)`).
#[derive(Debug, Parser)]
#[command(name = "dhlab", version)]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory holding the prime table cache (overrides DHLAB_CACHE).
    #[arg(long, global = true, value_name = "DIR")]
    pub table_cache: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Continued-fraction convergents of lambda1/lambda2.
    Cf(CfArgs),
    /// Windows X = q^(7/3) from the convergents of the configured lambda1/lambda2.
    Plan(PlanArgs),
    /// Sieve weights rho(m) at scale X.
    Weights(WeightsArgs),
    /// Exponential sums on a uniform alpha grid.
    Expsum(ExpsumArgs),
    /// Arc integrals and the Parseval oracle for one window.
    Arcs(ArcsArgs),
    /// Sampled level-set measure on a minor-arc band.
    Levelset(LevelsetArgs),
    /// Solve the exponent program.
    Optimize(OptimizeArgs),
    /// Enumerate solutions in the window (delta X, X].
    Search(SearchArgs),
    /// Run the check pipeline against a config.
    Verify(VerifyArgs),
    /// Turn arcs, search and levelset results into plot-data CSVs.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Cf(_) => "cf",
            Command::Plan(_) => "plan",
            Command::Weights(_) => "weights",
            Command::Expsum(_) => "expsum",
            Command::Arcs(_) => "arcs",
            Command::Levelset(_) => "levelset",
            Command::Optimize(_) => "optimize",
            Command::Search(_) => "search",
            Command::Verify(_) => "verify",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArg {
    /// Instance config JSON; the built-in default instance when omitted.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct WindowSelect {
    /// Convergent denominator; the window is X = q^(7/3).
    #[arg(long)]
    pub q: Option<u64>,
    /// Scale X, not tied to a convergent.
    #[arg(long)]
    pub x: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct CfArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub lambda1: String,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda2: String,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, default_value_t = 5)]
    pub count: usize,
    /// Override the config's u.
    #[arg(long)]
    pub u: Option<String>,
    /// Accept a lambda ratio whose irrationality rests on a truncated decimal.
    #[arg(long)]
    pub acknowledge_unverified: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct WeightsArgs {
    #[arg(long)]
    pub x: String,
    #[arg(long, default_value = dhlab_core::model::DEFAULT_DELTA)]
    pub delta: String,
    /// CSV with columns m,rho.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExpsumArgs {
    /// One of sk, uk, tk, s2t.
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value = "21/20")]
    pub k: String,
    #[arg(long)]
    pub x: String,
    #[arg(long, default_value = dhlab_core::model::DEFAULT_DELTA)]
    pub delta: String,
    /// The sum is evaluated at lambda * alpha.
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    pub lambda: String,
    /// start:stop:count
    #[arg(long, allow_hyphen_values = true)]
    pub alphas: String,
    /// CSV with columns alpha,re,im.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ArcsArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub window: WindowSelect,
    /// Replace the window's eta (the trivial cutoff follows).
    #[arg(long)]
    pub eta: Option<String>,
    /// Fixed truncation point for the real-line integral; doubled automatically when omitted.
    #[arg(long)]
    pub cutoff: Option<String>,
    /// Sample points per region in the magnitude grids.
    #[arg(long, default_value_t = 256)]
    pub grid_points: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct LevelsetArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub window: WindowSelect,
    /// Defaults to X^(1/2-u+2 eps).
    #[arg(long)]
    pub z1: Option<String>,
    /// Defaults to X^(1/2-u+2 eps).
    #[arg(long)]
    pub z2: Option<String>,
    /// Band [y, 2y], inside the minor arc.
    #[arg(long)]
    pub y: String,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Constant C in the witness bound |q alpha - a| <= C X^-1 (X^(1/2+eps)/Z)^4.
    #[arg(long, default_value = "1")]
    pub witness_constant: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    /// Program JSON; the built-in exponent system when omitted.
    #[arg(long, value_name = "FILE")]
    pub program: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Scale X, or a comma-separated list for a sweep.
    #[arg(long)]
    pub x: String,
    #[arg(long, default_value_t = dhlab_core::search::DEFAULT_BUDGET)]
    pub budget: u64,
    /// Sweep windows below this scale are skipped.
    #[arg(long, default_value = "0")]
    pub floor: String,
    /// JSONL, one record per solution (single X only).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the summary JSON here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Result files written by arcs, search (summary) or levelset.
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}
