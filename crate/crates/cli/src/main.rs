use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use quadnet::Family;

mod commands;
mod error;
mod output;

use error::CliError;

/// Simulate and analyze four-mode cluster and GHZ states.
#[derive(Parser, Debug)]
#[command(name = "quadnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Output covariance and the six measured combinations of a network
    Simulate(SimulateArgs),
    /// Analytic and numerically minimized gains side by side
    Gains(GainsArgs),
    /// Variance-sum criteria, bound table and inseparability verdict
    Criteria(CriteriaArgs),
    /// Criterion sums over a range of squeezing parameters
    Sweep(SweepArgs),
    /// Emulated spectrum-analyzer trace of one combination
    Trace(TraceArgs),
    /// Calibrate efficiencies and gains against a measured dataset
    Fit(FitArgs),
}

#[derive(Args, Debug, Clone)]
struct StateArgs {
    /// State family: cluster or ghz
    #[arg(long, default_value = "cluster")]
    family: Family,
    /// Squeezing parameter of every input squeezer
    #[arg(long, default_value_t = 0.402, allow_negative_numbers = true)]
    r: f64,
    /// `optimal`, one gain for all slots, or four comma-separated gains
    #[arg(long, default_value = "optimal")]
    gains: String,
    /// Detection efficiency: one value or four comma-separated values
    #[arg(long, default_value = "1")]
    efficiency: String,
    /// Network file replacing the built-in network (must leave four modes)
    #[arg(long)]
    network: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Directory for simulate.json and simulate.csv; CSV goes to stdout otherwise
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args, Debug)]
struct GainsArgs {
    #[arg(long, default_value_t = 0.402, allow_negative_numbers = true)]
    r: f64,
    /// Restrict to one family
    #[arg(long)]
    family: Option<Family>,
}

#[derive(Args, Debug)]
struct CriteriaArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Evaluate the sums of a measured dataset instead of a simulated state
    #[arg(long, conflicts_with = "state_file")]
    from_measured: Option<PathBuf>,
    /// JSON file holding a four-mode covariance matrix (e.g. simulate.json)
    #[arg(long)]
    state_file: Option<PathBuf>,
    /// Directory for criteria.json; JSON goes to stdout otherwise
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, default_value = "cluster")]
    family: Family,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    r_min: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    r_max: f64,
    #[arg(long, default_value_t = 21)]
    steps: usize,
    #[arg(long, default_value = "optimal")]
    gains: String,
    #[arg(long, default_value = "1")]
    efficiency: String,
    /// Directory for sweep.csv; CSV goes to stdout otherwise
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TraceArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Quadrature combination, e.g. "Y1-Y2" or "0.75X1+X2+2X3"
    #[arg(long, default_value = "Y1-Y2", allow_hyphen_values = true)]
    combination: String,
    #[arg(long, default_value_t = 2e6)]
    analysis_frequency: f64,
    #[arg(long, default_value_t = 30e3)]
    rbw: f64,
    #[arg(long, default_value_t = 30.0)]
    vbw: f64,
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 10_000)]
    samples_per_point: usize,
    /// Random seed; falls back to QUADNET_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for trace.csv (created if missing); CSV goes to stdout otherwise
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Measured dataset JSON
    dataset: PathBuf,
    /// Directory for fit.json and fit_report.txt; JSON to stdout and report to stderr otherwise
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_timestamp: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Gains(a) => commands::gains(&a),
        Command::Criteria(a) => commands::criteria(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Trace(a) => commands::trace(&a),
        Command::Fit(a) => commands::fit(&a),
    }
}

/// Usage line of the named subcommand, or of the whole tool.
fn usage_for(subcommand: Option<String>) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let sub = subcommand.and_then(|name| cmd.find_subcommand_mut(&name).cloned());
    match sub {
        Some(mut sub) => sub.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            eprint!("{text}");
            if !text.contains("Usage:") {
                eprintln!("\n{}", usage_for(std::env::args().nth(1)));
            }
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
