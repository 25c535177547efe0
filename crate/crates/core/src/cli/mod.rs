//! Command-line front end: `generate`, `validate`, `run`, `report`.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 validation failure,
//! 3 runtime failure.

pub mod artifacts;
mod commands;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;

pub use commands::{cmd_generate, cmd_report, cmd_run, cmd_validate, ValidateReport};
pub use config::{ExperimentConfig, Source};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Overrides the default output root when `--out` is not given.
pub const OUT_ENV: &str = "RELEX_OUT";
pub const DEFAULT_OUT: &str = "relex-out";

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl fmt::Display) -> Self {
        Self { code: EXIT_USAGE, message: message.to_string() }
    }

    pub fn validation(message: impl fmt::Display) -> Self {
        Self { code: EXIT_VALIDATION, message: message.to_string() }
    }

    pub fn runtime(message: impl fmt::Display) -> Self {
        Self { code: EXIT_RUNTIME, message: message.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidSpec(_)
            | Error::Factorization { .. }
            | Error::Singular(_)
            | Error::Dimension(_)
            | Error::MissingConstants => EXIT_VALIDATION,
            Error::Json(_) | Error::Csv(_) | Error::InvalidParameter(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T = ()> = std::result::Result<T, Failure>;

#[derive(Debug, Parser)]
#[command(name = "relex", version, about = "Representation selection for bilinear episodic MDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an MDP instance and representation class.
    Generate(GenerateArgs),
    /// Check an instance/class pair: validity, exact factorization, coverage.
    Validate(ValidateArgs),
    /// Run every (algorithm, seed) job of an experiment config.
    Run(RunArgs),
    /// Plot cumulative regret of finished runs and summarize them.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Tabular,
    Cluster,
    Rotated,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub kind: GenKind,
    /// Generator parameters (cluster) as JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tabular: `stay-or-leave` or the path of an instance JSON.
    #[arg(long)]
    pub instance: Option<String>,
    /// Rotated: directory holding the instance.json and class.json to rotate.
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// Rotated: JSON list of square matrices (rows), one per feature map.
    #[arg(long)]
    pub rotation: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Directory containing instance.json and class.json.
    pub dir: Option<PathBuf>,
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long)]
    pub class: Option<PathBuf>,
    #[arg(long, default_value_t = crate::harness::DEFAULT_RANK_TOL)]
    pub rank_tol: f64,
    /// Also write validation.json, coverage.json and uncovered.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum concurrent jobs; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue the run saved in this snapshot.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories, or roots whose subdirectories are run directories.
    #[arg(required = true)]
    pub run_dirs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Logarithmic episode axis.
    #[arg(long)]
    pub log_x: bool,
}

/// `--out` if given, else `$RELEX_OUT`, else `fallback`, else `relex-out`.
pub fn output_root(flag: Option<&Path>, fallback: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(env) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    fallback.map_or_else(|| PathBuf::from(DEFAULT_OUT), Path::to_path_buf)
}

pub fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Validate(a) => cmd_validate(&a).map(|_| ()),
        Command::Run(a) => cmd_run(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

/// Parses `args` (including the program name) and runs the command;
/// returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}
