//! `roadhawkes`: simulate, fit, validate and localize incident catalogs.
//!
//! Exit codes: 0 success (or validation pass), 2 validation fail, 1 error.
//! Errors print one line: `error: kind=<kind> msg=<message>`.

mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (build ", env!("ROADHAWKES_BUILD"), ")");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Path(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Path(_) => "path",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "roadhawkes", version = VERSION, about = "Self-exciting point process models for road incidents")]
struct Cli {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic catalog from a model document or the built-in ring scenario.
    Simulate(SimulateArgs),
    /// Fit the model to an event catalog.
    Fit(FitArgs),
    /// Time-rescaling check of a fitted model against a catalog.
    Validate(ValidateArgs),
    /// Place incidents between loop sensors.
    Localize(LocalizeArgs),
    /// Nested-model comparison, hotspots and triggered fraction.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DomainArgs {
    /// Study window length in minutes (overrides the event file's `#domain=` line).
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Road length in meters.
    #[arg(long)]
    pub x_max: Option<f64>,
    /// Treat the road as a closed ring.
    #[arg(long)]
    pub ring: bool,
    /// Calendar position of t = 0, e.g. `Mon,00:00`.
    #[arg(long)]
    pub anchor: Option<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Event CSV with a `t_min,x_m` header.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Directory for the outputs; created if missing.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Switch a component off: daily, weekly, trend, spatial or triggering.
    #[arg(long)]
    pub disable: Vec<String>,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[command(flatten)]
    pub domain: DomainArgs,
    /// Refit over listed bandwidths, e.g. `daily=30,60,90`; repeatable.
    #[arg(long)]
    pub bandwidth_sweep: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TuningArgs {
    /// Kernel bandwidth of the daily curve, in minutes.
    #[arg(long)]
    pub bandwidth_daily: Option<f64>,
    /// Kernel bandwidth of the weekly curve, in minutes.
    #[arg(long)]
    pub bandwidth_weekly: Option<f64>,
    /// Kernel bandwidth of the trend curve, in minutes.
    #[arg(long)]
    pub bandwidth_trend: Option<f64>,
    /// Kernel bandwidth of the spatial curve, in meters.
    #[arg(long)]
    pub bandwidth_spatial: Option<f64>,
    /// Kernel bandwidth of the g curve, in minutes.
    #[arg(long)]
    pub bandwidth_g: Option<f64>,
    /// Kernel bandwidth of the h curve, in meters.
    #[arg(long)]
    pub bandwidth_h: Option<f64>,
    /// Triggering horizon in minutes.
    #[arg(long)]
    pub horizon_t: Option<f64>,
    /// Triggering horizon in meters.
    #[arg(long)]
    pub horizon_x: Option<f64>,
    /// Allowed upward slope of g and h.
    #[arg(long)]
    pub eps_mono: Option<f64>,
    /// Skip the non-increasing adjustment of g and h.
    #[arg(long)]
    pub no_monotone: bool,
    /// Iteration budget of the fit.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Convergence tolerance on A, mu0 and the background weights.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Cache step of the time curves in minutes.
    #[arg(long)]
    pub grid_dt: Option<f64>,
    /// Cache step of the distance curves in meters.
    #[arg(long)]
    pub grid_dx: Option<f64>,
    /// Starting triggering rate.
    #[arg(long)]
    pub init_a: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory for the outputs; created if missing.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Random seed; equal seeds give byte-identical catalogs.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model document to sample from; defaults to the built-in ring scenario.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Switch a component of the sampling model off.
    #[arg(long)]
    pub disable: Vec<String>,
    /// Scenario length in days.
    #[arg(long)]
    pub days: Option<f64>,
    /// Scenario ring length in meters.
    #[arg(long)]
    pub length_m: Option<f64>,
    /// Expected number of background events in the scenario.
    #[arg(long)]
    pub background_events: Option<f64>,
    /// Scenario triggering rate.
    #[arg(long)]
    pub a: Option<f64>,
    /// Cap on offspring generations in the simulation.
    #[arg(long)]
    pub max_generations: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    InSample,
    OutOfSample,
}

impl std::str::FromStr for ModeArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Event CSV with a `t_min,x_m` header.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Fitted model document written by `fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Directory for the outputs; created if missing.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// in-sample (default) or out-of-sample; the latter needs a model without trend.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[command(flatten)]
    pub domain: DomainArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregateArg {
    Max,
    TopFiveMean,
}

impl std::str::FromStr for AggregateArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// Loop-sensor CSV.
    #[arg(long)]
    pub loops: Option<PathBuf>,
    /// CSV of `t_start,t_end,x_lo,x_hi` windows.
    #[arg(long)]
    pub windows: Option<PathBuf>,
    /// Directory for the outputs; created if missing.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Keep only windows whose speed drops at least this far below normal.
    #[arg(long)]
    pub threshold_pct: Option<f64>,
    /// How per-minute impact scores combine over a window.
    #[arg(long, value_enum)]
    pub aggregate: Option<AggregateArg>,
    /// Calendar position of minute 0 when the loop file has no `#anchor=` line.
    #[arg(long)]
    pub anchor: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Event CSV with a `t_min,x_m` header.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Directory for the outputs; created if missing.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[command(flatten)]
    pub domain: DomainArgs,
}

fn error_line(kind: &str, msg: &str) -> String {
    let flat: Vec<&str> = msg.split_whitespace().collect();
    format!("error: kind={kind} msg={}", flat.join(" "))
}

fn kind_of(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.downcast_ref::<roadhawkes::Error>() {
        e.kind()
    } else if let Some(e) = err.downcast_ref::<CliError>() {
        e.kind()
    } else if err.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else {
        "internal"
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_line("usage", &e.to_string()));
            return ExitCode::from(1);
        }
    };
    let result = settings::Layered::load(cli.config.as_deref())
        .map_err(anyhow::Error::from)
        .and_then(|layered| match cli.command {
            Command::Simulate(a) => commands::simulate(a, layered),
            Command::Fit(a) => commands::fit(a, layered),
            Command::Validate(a) => commands::validate(a, layered),
            Command::Localize(a) => commands::localize(a, layered),
            Command::Report(a) => commands::report(a, layered),
        });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", error_line(kind_of(&e), &format!("{e:#}")));
            ExitCode::from(1)
        }
    }
}
