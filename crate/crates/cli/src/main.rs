//! `qmp`: fit, sample and check quantile martingale posteriors from CSV data.
//!
//! Exit codes: 0 success, 1 failed check, 2 input error, 3 degenerate data,
//! 4 singular design.

mod commands;
mod io;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qmp_core::QmpError;

use crate::commands::ChecksFailed;

#[derive(Parser, Debug)]
#[command(name = "qmp", version, about = "Quantile martingale posterior estimation and sampling")]
struct Cli {
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true, env = "QMP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the quantile function of one numeric column.
    Fit(FitArgs),
    /// Draw posterior quantile functions from a previous fit.
    Sample(SampleArgs),
    /// Fit linear quantile regression coefficient functions.
    RegFit(RegFitArgs),
    /// Draw posterior coefficient functions from a previous regression fit.
    RegSample(RegSampleArgs),
    /// Verify the copula identities numerically.
    Check(CheckArgs),
}

#[derive(Args, Debug, Clone)]
pub struct TuningArgs {
    #[arg(long, default_value_t = 200)]
    pub grid_size: usize,
    /// Override the learning-rate constant `a`.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Fix the bandwidth constant `c` instead of tuning it.
    #[arg(long)]
    pub bandwidth_c: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub bandwidth_k: f64,
    #[arg(long, default_value_t = 10)]
    pub permutations: usize,
    /// Number of candidate values of `c`.
    #[arg(long, default_value_t = 20)]
    pub c_grid: usize,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Column to fit; required when the file has more than one.
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Args, Debug, Clone)]
pub struct DrawArgs {
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    /// Forward steps beyond the data (exact mode).
    #[arg(long, default_value_t = 5000)]
    pub horizon_extra: usize,
    /// Use the Gaussian-process approximation instead of exact resampling.
    #[arg(long)]
    pub approx: bool,
    /// Comma-separated credible levels.
    #[arg(long, default_value = "0.95")]
    pub levels: String,
    #[arg(long)]
    pub seed: u64,
    /// Also write every draw.
    #[arg(long)]
    pub emit_draws: bool,
    /// Comma-separated functionals: mean, var, q<p>.
    #[arg(long, default_value = "mean")]
    pub functionals: String,
    #[arg(long, default_value_t = 1e-10)]
    pub gp_jitter: f64,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Directory holding fit.json and quantile.csv.
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub draw: DrawArgs,
}

#[derive(Args, Debug)]
pub struct RegFitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub response: String,
    /// Comma-separated covariate columns; default is every other column.
    #[arg(long)]
    pub covariates: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Args, Debug)]
pub struct RegSampleArgs {
    /// Directory holding reg_fit.json and coeffs_standardized.csv.
    #[arg(long)]
    pub fit: PathBuf,
    /// The data file the fit was made from.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Covariate values (without intercept) for a conditional summary;
    /// repeatable.
    #[arg(long)]
    pub at: Vec<String>,
    #[command(flatten)]
    pub draw: DrawArgs,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated correlations for the martingale and density checks.
    #[arg(long)]
    pub rho: Option<String>,
    /// Override every check's tolerance.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<QmpError>() {
            return match e {
                QmpError::DegenerateData(_) => 3,
                QmpError::SingularDesign(_) => 4,
                _ => 2,
            };
        }
        if cause.is::<ChecksFailed>() {
            return 1;
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(io::input_error("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| io::input_error(format!("cannot start thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit(a) => commands::fit::run(&a),
        Command::Sample(a) => commands::sample::run(&a),
        Command::RegFit(a) => commands::reg::run_fit(&a),
        Command::RegSample(a) => commands::reg::run_sample(&a),
        Command::Check(a) => commands::check::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
