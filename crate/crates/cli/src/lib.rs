//! `stme` command-line tool: synthetic catalogs, STM extraction, tail fits,
//! return values, diagnostics and resampling experiments.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
mod output;

/// Failure classes, mapped to exit codes 2 and 1.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or inputs; nothing was computed.
    Usage(String),
    /// The inputs were valid but the computation failed.
    Compute(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Compute(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

pub(crate) fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub(crate) fn compute(e: impl fmt::Display) -> CliError {
    CliError::Compute(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "stme",
    version,
    about = "Regional return values of cyclone-induced wave height"
)]
pub struct Cli {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// More log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cyclone catalog
    Synth(SynthArgs),
    /// Extract space-time maxima and exposures
    Stm(StmArgs),
    /// Fit the STM tail above the n-th largest value
    Fit(FitArgs),
    /// Estimate T-year return values
    ReturnValues(ReturnValueArgs),
    /// Check the STM-E modelling assumptions
    Diagnostics(DiagnosticsArgs),
    /// Run the resampling experiment
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CatalogArgs {
    /// Footprint CSV (cyclone_id,location_id,max_swh_m)
    #[arg(long)]
    pub footprints: Option<PathBuf>,
    /// Location CSV (location_id,lon_deg,lat_deg,depth_m)
    #[arg(long)]
    pub locations: Option<PathBuf>,
    /// Years of observation the catalog represents
    #[arg(long)]
    pub duration_years: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RegionArgs {
    /// Region bounding box: lon_min,lon_max,lat_min,lat_max
    #[arg(
        long,
        value_delimiter = ',',
        num_args = 4,
        allow_negative_numbers = true
    )]
    pub bbox: Option<Vec<f64>>,
    /// Region as an explicit list of location ids
    #[arg(long, value_delimiter = ',')]
    pub region_locations: Option<Vec<u32>>,
    /// Drop locations shallower than this depth (m)
    #[arg(long)]
    pub min_depth: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutArgs {
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Catalog length in years
    #[arg(long)]
    pub years: Option<f64>,
    /// Mean events per year
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Draw the event count from a Poisson distribution
    #[arg(long)]
    pub poisson: bool,
    /// Footprint decay length (km); `inf` for uniform footprints
    #[arg(long)]
    pub decay_km: Option<f64>,
    /// Log-scale standard deviation of footprint noise
    #[arg(long)]
    pub noise: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct StmArgs {
    #[command(flatten)]
    pub catalog: CatalogArgs,
    #[command(flatten)]
    pub region: RegionArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub catalog: CatalogArgs,
    #[command(flatten)]
    pub region: RegionArgs,
    /// Number of largest STM values to fit
    #[arg(long)]
    pub n: Option<usize>,
    /// mle or pwm (repeatable)
    #[arg(long = "method")]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReturnValueArgs {
    #[command(flatten)]
    pub catalog: CatalogArgs,
    #[command(flatten)]
    pub region: RegionArgs,
    /// Return period (years)
    #[arg(long = "T")]
    pub return_period: Option<f64>,
    /// Observation period (years); defaults to the catalog duration
    #[arg(long = "T0")]
    pub observation_years: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// mle or pwm (repeatable)
    #[arg(long = "method")]
    pub methods: Vec<String>,
    /// stme, single or empirical (repeatable)
    #[arg(long = "estimator")]
    pub estimators: Vec<String>,
    /// Locations to report (default: the whole region)
    #[arg(long = "at", value_delimiter = ',')]
    pub at: Option<Vec<u32>>,
    /// conditional or mixture
    #[arg(long)]
    pub tail_model: Option<String>,
    /// retained or all
    #[arg(long)]
    pub exposure_pool: Option<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnosticsArgs {
    #[command(flatten)]
    pub catalog: CatalogArgs,
    #[command(flatten)]
    pub region: RegionArgs,
    /// Central probability of the Kendall tau band
    #[arg(long)]
    pub band: Option<f64>,
    /// Trend directions in degrees counter-clockwise from east (repeatable)
    #[arg(long = "orientation", allow_negative_numbers = true)]
    pub orientations: Vec<f64>,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub null_draws: Option<usize>,
    /// Event-set size for the exposure test, 0 for all (repeatable)
    #[arg(long = "kl-size")]
    pub kl_sizes: Vec<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub catalog: CatalogArgs,
    #[command(flatten)]
    pub region: RegionArgs,
    /// Resample from a synthetic world ([synth] section) instead of a catalog
    #[arg(long)]
    pub synth: bool,
    /// Sample period (years)
    #[arg(long = "T0")]
    pub t0: Option<f64>,
    /// Return period (years)
    #[arg(long = "T")]
    pub t: Option<f64>,
    /// Retained-event counts (repeatable or comma separated)
    #[arg(long = "n", value_delimiter = ',')]
    pub n_ladder: Vec<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long = "method")]
    pub methods: Vec<String>,
    #[arg(long = "estimator")]
    pub estimators: Vec<String>,
    #[arg(long = "at", value_delimiter = ',')]
    pub at: Option<Vec<u32>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// fixed or poisson
    #[arg(long)]
    pub count_rule: Option<String>,
    /// Discard replicate files from an earlier run
    #[arg(long)]
    pub fresh: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match commands::run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
