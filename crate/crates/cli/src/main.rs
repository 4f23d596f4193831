mod commands;
mod select;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Nonparametric time-varying-parameter VARs with tree-driven factors.
#[derive(Debug, Parser)]
#[command(name = "tvpbart", version)]
struct Cli {
    /// Worker threads for the sampler and post-processing (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the sampler and write a draw store.
    Estimate(EstimateArgs),
    /// Impulse responses to the business-cycle shock.
    Irf(IrfArgs),
    /// Per-draw shock labels and variance-share trajectories.
    Identify(IdentifyArgs),
    /// Responses under counterfactual modifier values.
    Scenario(ScenarioArgs),
    /// WAIC of a stored run, optionally on a subset of the variables.
    Waic(WaicArgs),
    /// Generate data from a known process.
    Simulate(SimulateArgs),
    /// Single-equation Phillips curve with a time-trend modifier.
    ToyPhillips(ToyArgs),
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Flat JSON model configuration.
    #[arg(long, required_unless_present = "manifest")]
    config: Option<PathBuf>,
    /// Replay the configuration and seed recorded in an existing manifest.
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
    /// Endogenous series: CSV with a date column first.
    #[arg(long)]
    data: PathBuf,
    /// Effect modifiers: CSV with a date column first.
    #[arg(long)]
    modifiers: PathBuf,
    /// JSON with `endogenous` and `modifiers` transformation specs.
    #[arg(long)]
    transforms: Option<PathBuf>,
    /// Output directory of the draw store.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args, Clone)]
pub struct ShockArgs {
    /// Draw store written by `estimate`.
    #[arg(long)]
    store: PathBuf,
    /// Output variable used to label the shock.
    #[arg(long)]
    output: String,
    /// Unemployment variable used to label the shock.
    #[arg(long)]
    unemployment: String,
    /// Recession window `START:END` (inclusive dates); repeatable.
    #[arg(long = "recession", required = true)]
    recessions: Vec<String>,
}

#[derive(Debug, Args)]
struct IrfArgs {
    #[command(flatten)]
    shock: ShockArgs,
    #[arg(long, default_value_t = 16)]
    horizons: usize,
    /// `all`, a date, or a zero-based period index.
    #[arg(long, default_value = "all")]
    time: String,
    /// Price variable for Phillips-curve multipliers; repeatable.
    #[arg(long = "price")]
    prices: Vec<String>,
    /// Central posterior mass of the reported band.
    #[arg(long, default_value_t = 0.68)]
    coverage: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IdentifyArgs {
    #[command(flatten)]
    shock: ShockArgs,
    /// CSV of the identified factor's variance shares over time.
    #[arg(long)]
    shares: Option<PathBuf>,
    #[arg(long, default_value_t = 0.68)]
    coverage: f64,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[command(flatten)]
    shock: ShockArgs,
    /// Modifier set to its sample percentiles.
    #[arg(long)]
    vary: String,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 25.0, 50.0, 75.0, 100.0])]
    percentiles: Vec<f64>,
    /// `START:END` dates whose means fix the other modifiers (default: full sample).
    #[arg(long)]
    anchor_window: Option<String>,
    /// Reported response variables (default: all).
    #[arg(long = "price", value_delimiter = ',')]
    prices: Vec<String>,
    #[arg(long, default_value_t = 16)]
    horizons: usize,
    #[arg(long, default_value_t = 0.68)]
    coverage: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WaicArgs {
    #[arg(long)]
    store: PathBuf,
    /// Variables whose marginal likelihood enters WAIC.
    #[arg(long, value_delimiter = ',')]
    subset: Vec<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON process specification.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Treat the spec as a toy coefficient law and emit two-column data.
    #[arg(long)]
    toy: bool,
    #[arg(long, default_value_t = 200)]
    periods: usize,
    #[arg(long, default_value_t = 1.0)]
    intercept: f64,
    #[arg(long, default_value_t = 0.3)]
    noise_sd: f64,
}

#[derive(Debug, Args)]
struct ToyArgs {
    /// CSV with a date column, the dependent series, and the regressor.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    trees: usize,
    #[arg(long, default_value_t = 20)]
    vol_trees: usize,
    #[arg(long, default_value_t = 3000)]
    draws: usize,
    #[arg(long, default_value_t = 1000)]
    burn: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the coefficient path and regime summary.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Estimate(a) => commands::estimate(a),
        Command::Irf(a) => commands::irf(a),
        Command::Identify(a) => commands::identify(a),
        Command::Scenario(a) => commands::scenario(a),
        Command::Waic(a) => commands::waic(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::ToyPhillips(a) => commands::toy_phillips(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
