//! The `virodyne` command line.
//!
//! Every command is a pure function of its flags, input files and seed.
//! CSV outputs start with `#` metadata lines (tool version, command, config
//! hash, seed and the canonical config); JSON outputs carry the same in a
//! `meta` object. Exit status is 0 on success, 1 when the models reject the
//! input, 2 on a usage or configuration error.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use config::{ConfigError, ScenarioConfig};

/// Caps the number of worker threads.
pub const THREADS_ENV: &str = "VIRODYNE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error(transparent)]
    Model(#[from] virodyne::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Model(_) | CliError::Io { .. } => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "virodyne", version, about = "Airborne transmission channels and viral mutation analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Concentration on the observer grid of a scenario.
    Field(FieldArgs),
    /// Agent-based susceptible-infected run.
    Epidemic(EpidemicArgs),
    /// Monte Carlo bit error rate and mutual information.
    Detect(DetectArgs),
    /// Estimate a source position and rate from sensor readings.
    Localize(LocalizeArgs),
    /// Per-position Shannon entropy of an alignment.
    Entropy(EntropyArgs),
    /// Highest-entropy positions of an alignment.
    Hotspots(HotspotsArgs),
    /// Rank mutation targets at one position.
    Direction(DirectionArgs),
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Source speed in m/s along each source's configured direction (+x
    /// when none is configured).
    #[arg(long)]
    pub speed: Option<f64>,
    /// Observation times in s, replacing the observer's `t`.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub time: Vec<f64>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EpidemicArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `[run] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-agent CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Infection-curve JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `[run] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    /// Constant-rate source at steady state.
    Steady,
    /// Constant-rate source switched on at `--start`.
    Continuous,
    /// Single release at `--start`.
    Instant,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// CSV with header `x,y,z,t,c,sigma`.
    #[arg(long)]
    pub readings: PathBuf,
    /// Scenario whose `[environment]` describes the medium.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value = "steady")]
    pub kind: KindArg,
    /// Switch-on or release time, s.
    #[arg(long, default_value_t = 0.0)]
    pub start: f64,
    /// Search box corners `x,y,z`; the sensors' bounding box when absent.
    #[arg(long, value_delimiter = ',', num_args = 3, requires = "domain_max")]
    pub domain_min: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 3, requires = "domain_min")]
    pub domain_max: Option<Vec<f64>>,
    /// Coarse-grid points per axis.
    #[arg(long, default_value_t = 16)]
    pub grid: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlphabetArg {
    #[value(name = "nt")]
    Nucleotide,
    #[value(name = "aa")]
    AminoAcid,
}

#[derive(Debug, Args)]
pub struct AlignmentArgs {
    #[arg(long)]
    pub fasta: PathBuf,
    #[arg(long, value_enum, default_value = "nt")]
    pub alphabet: AlphabetArg,
    /// Cut every sequence to the shortest instead of rejecting ragged input.
    #[arg(long)]
    pub truncate: bool,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    #[command(flatten)]
    pub alignment: AlignmentArgs,
    /// Added to every symbol count.
    #[arg(long, default_value_t = 0.0)]
    pub pseudocount: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("selection").required(true).args(["top", "threshold"])))]
pub struct HotspotsArgs {
    #[command(flatten)]
    pub alignment: AlignmentArgs,
    #[arg(long, default_value_t = 0.0)]
    pub pseudocount: f64,
    /// The `k` highest-entropy positions.
    #[arg(long)]
    pub top: Option<usize>,
    /// Every position with entropy at least this many bits.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Full,
    Ts,
    Tv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    Base,
    Codon,
    Aa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct DirectionArgs {
    #[command(flatten)]
    pub alignment: AlignmentArgs,
    /// 1-based column (base level) or codon/residue index.
    #[arg(long)]
    pub position: usize,
    /// Per-base transition probability.
    #[arg(long)]
    pub q: f64,
    /// Transversion-to-transition ratio.
    #[arg(long)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value = "full")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "aa")]
    pub level: LevelArg,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker threads: {e}")))
}

/// Runs one command line (including the program name) and returns the exit
/// status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match thread_pool().and_then(|pool| pool.install(|| commands::execute(&cli.command))) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
