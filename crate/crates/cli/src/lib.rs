//! Command-line driver: TOML scenarios, run artifacts and parallel sweeps.
//!
//! Every run writes into `<out>/<scenario name>/<command>/`:
//! `summary.json` (byte-stable), `timing.json` (wall clock) and the command's CSV tables.
//! Exit codes: 0 success, 1 invalid input, 2 solver or search failure.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod commands;
pub mod error;
pub mod scenario;
pub mod sweep;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

pub use artifact::Artifact;
pub use commands::{run_scenario, Command};
pub use error::CliError;
pub use scenario::{load_scenario, save_scenario, Scenario};

use crate::sweep::{run_sweep, Axis, SweepOptions};

pub const OUT_ENV: &str = "QPARCTL_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Summary,
}

#[derive(Debug, Parser)]
#[command(name = "qparctl", version, about = "Null-control experiments for 1D quasilinear parabolic equations")]
pub struct Cli {
    /// Output root; runs land in `<out>/<name>/<command>`.
    #[arg(long, env = OUT_ENV, default_value = "runs", global = true)]
    pub out: PathBuf,
    /// Worker threads for sweeps (defaults to the available cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "csv,summary", global = true)]
    pub format: Vec<Format>,
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Free evolution of the initial state.
    Simulate { scenario: PathBuf },
    /// Decay, maximum-modulus and regularity diagnostics of the free evolution.
    DecayReport { scenario: PathBuf },
    /// Additive null control with Picard iteration on the frozen coefficient.
    NullControl { scenario: PathBuf },
    /// Three-phase multiplicative control.
    MultControl { scenario: PathBuf },
    /// Minimal horizon under `|u| <= sigma`.
    TimeOptimal { scenario: PathBuf },
    /// Empirical observability ratios on random adjoint data.
    ObservabilityProbe { scenario: PathBuf },
    /// Cross product of scenario overrides, one full run per cell.
    Sweep {
        scenario: PathBuf,
        /// `key.path=v1,v2,...`; repeat for more axes.
        #[arg(long = "axis", required = true)]
        axes: Vec<Axis>,
        /// Command run in every cell.
        #[arg(long, value_enum, default_value = "mult-control")]
        run: Command,
    },
    /// Parse and check a scenario.
    Validate { scenario: PathBuf },
}

/// Where and how a run is written.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub workers: usize,
    pub csv: bool,
    pub summary: bool,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            workers: default_workers(),
            csv: true,
            summary: true,
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn run_dir(out: &Path, scenario: &Scenario, command: &str) -> PathBuf {
    out.join(&scenario.name).join(command)
}

/// Runs one command and writes its artifact; returns the artifact and its directory.
pub fn execute(command: Command, scenario: &Scenario, opts: &RunOptions) -> Result<(Artifact, PathBuf), CliError> {
    let start = Instant::now();
    let art = run_scenario(command, scenario);
    let dir = run_dir(&opts.out, scenario, command.name());
    art.write(&dir, opts.csv, opts.summary, start.elapsed().as_secs_f64())?;
    Ok((art, dir))
}

pub fn execute_sweep(
    command: Command,
    template: &Scenario,
    axes: &[Axis],
    opts: &RunOptions,
) -> Result<(Artifact, PathBuf), CliError> {
    let start = Instant::now();
    let dir = run_dir(&opts.out, template, "sweep");
    let sweep_opts = SweepOptions {
        workers: opts.workers,
        csv: opts.csv,
        summary: opts.summary,
    };
    let art = run_sweep(template, command, axes, &dir, sweep_opts)?;
    // The aggregate table is the point of a sweep, so it is written regardless of `--format`.
    art.write(&dir, true, opts.summary, start.elapsed().as_secs_f64())?;
    Ok((art, dir))
}

/// Parses `argv` (program name first), runs, and returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let opts = RunOptions {
        out: cli.out,
        workers: cli.workers.unwrap_or_else(default_workers),
        csv: cli.format.contains(&Format::Csv),
        summary: cli.format.contains(&Format::Summary),
    };
    let (command, path, axes) = match cli.command {
        Sub::Simulate { scenario } => (Command::Simulate, scenario, None),
        Sub::DecayReport { scenario } => (Command::DecayReport, scenario, None),
        Sub::NullControl { scenario } => (Command::NullControl, scenario, None),
        Sub::MultControl { scenario } => (Command::MultControl, scenario, None),
        Sub::TimeOptimal { scenario } => (Command::TimeOptimal, scenario, None),
        Sub::ObservabilityProbe { scenario } => (Command::ObservabilityProbe, scenario, None),
        Sub::Validate { scenario } => (Command::Validate, scenario, None),
        Sub::Sweep { scenario, axes, run } => (run, scenario, Some(axes)),
    };
    // Unparseable files leave no artifact; schema violations are recorded in one.
    let scenario = match std::fs::read_to_string(&path)
        .map_err(|e| CliError::Io {
            path: path.clone(),
            message: e.to_string(),
        })
        .and_then(|text| Scenario::from_toml(&text, &path.display().to_string()))
    {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let result = match axes {
        None => execute(command, &scenario, &opts),
        Some(axes) => execute_sweep(command, &scenario, &axes, &opts),
    };
    match result {
        Ok((art, dir)) => {
            match &art.error {
                Some(err) => eprintln!("{}: {} ({})", art.command, err.message, dir.display()),
                None => println!("{}: ok ({})", art.command, dir.display()),
            }
            art.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
