mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fdoar::builder::MeasurementMode;

/// Emitter geolocation from FDOA/TDOA measurements by homotopy continuation.
///
/// Files use metres, m/s and seconds throughout.
#[derive(Debug, Parser)]
#[command(name = "fdoar", version)]
pub struct Cli {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for path tracking and trials (0 = one per CPU).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a scenario's polynomial system once and gate every solution.
    Solve(SolveArgs),
    /// Robust estimate from many FDOA measurements by RANSAC.
    Fdoar(FdoarArgs),
    /// Monte Carlo noise sweep; writes per-trial and summary CSVs.
    Sweep(SweepArgs),
    /// Check the minimum measurement count for one mode and dimension.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Scenario JSON file.
    pub scenario: PathBuf,
    /// Spatial dimension (2 or 3).
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    /// Constrain the emitter to this altitude (m, 3D only).
    #[arg(long)]
    pub altitude: Option<f64>,
    /// Refuse systems needing more total-degree paths than this.
    #[arg(long, default_value_t = 100_000)]
    pub max_paths: u64,
    /// Also list complex endpoints.
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Args)]
pub struct FdoarArgs {
    /// Scenario JSON file with FDOA measurements.
    pub scenario: PathBuf,
    /// RANSAC iterations.
    #[arg(long, default_value_t = 20)]
    pub maxiter: usize,
    /// Inlier tolerance on |predicted - measured| FDOA (m/s).
    #[arg(long, default_value_t = 0.03)]
    pub epsilon: f64,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON experiment settings; omitted fields keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Summary CSV (one row per noise level).
    #[arg(long, default_value = "sweep_summary.csv")]
    pub summary: PathBuf,
    /// Per-trial CSV.
    #[arg(long)]
    pub results: Option<PathBuf>,
    /// Override the number of trials per noise level.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Tdoa,
    Fdoa,
    TdoaFdoa,
}

impl From<ModeArg> for MeasurementMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Tdoa => MeasurementMode::TdoaOnly,
            ModeArg::Fdoa => MeasurementMode::FdoaOnly,
            ModeArg::TdoaFdoa => MeasurementMode::TdoaFdoa,
        }
    }
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Spatial dimension (2 or 3).
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    /// Add a known-altitude constraint.
    #[arg(long)]
    pub alt: bool,
    /// Random scenarios to try.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
}

fn main() -> ExitCode {
    env_logger::init();
    // Usage errors exit 1 like other input errors; 2 is reserved for
    // "no feasible solution".
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot start worker threads: {e}");
        return ExitCode::from(1);
    }
    let outcome = match &cli.command {
        Command::Solve(a) => commands::solve(a, cli.seed),
        Command::Fdoar(a) => commands::fdoar(a, cli.seed),
        Command::Sweep(a) => commands::sweep(a, cli.seed),
        Command::Bounds(a) => commands::bounds(a, cli.seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
