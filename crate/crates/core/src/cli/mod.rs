//! Command-line front end: configuration, orchestration and report output.
//!
//! Every subcommand reads a flat `key = value` configuration (see
//! [`config`]), writes its reports into the output directory and returns
//! the list of checks it evaluated. The process exit code is derived from
//! those checks and from the error kind.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
pub use config::KeyValues;

/// Key holding the wall-clock time in every JSON report; it is the only
/// field that differs between reruns.
pub const TIMESTAMP_KEY: &str = "generated_at";

#[derive(Debug, Parser)]
#[command(name = "nsslice", version, about = "Slice Galerkin solver and analysis toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat key = value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Seed for randomized steps; overrides the `seed` key.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Overrides a configuration key.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Restrict 3D fields to a hyperplane slice.
    Project,
    /// Solve the slice problem and write frames plus the energy ledger.
    Solve,
    /// Twin-run contraction experiment.
    Uniqueness,
    /// Pointwise quadratic-form analysis and the uniqueness criterion.
    Quadform,
    /// Stratification verdict for the support of a field.
    Stratify,
    /// Manufactured-solution convergence study.
    Mms,
}

/// A named pass/fail outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
}

impl Check {
    pub fn new(name: &str, passed: bool) -> Self {
        Self {
            name: name.to_string(),
            passed,
        }
    }
}

/// Configuration, output directory and seed shared by all subcommands.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: KeyValues,
    pub out: PathBuf,
    pub seed: u64,
}

impl RunContext {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(p) => KeyValues::load(p)?,
            None => KeyValues::default(),
        };
        for s in &cli.set {
            config.apply_override(s)?;
        }
        let seed = match cli.seed {
            Some(s) => s,
            None => config.get_or("seed", 0u64)?,
        };
        Ok(Self {
            config,
            out: cli.out.clone(),
            seed,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Runs one subcommand and returns its checks.
pub fn run(command: Command, ctx: &RunContext) -> Result<Vec<Check>> {
    std::fs::create_dir_all(&ctx.out).map_err(|e| Error::io(&ctx.out, e))?;
    match command {
        Command::Project => commands::project(ctx),
        Command::Solve => commands::solve(ctx),
        Command::Uniqueness => commands::uniqueness(ctx),
        Command::Quadform => commands::quadform(ctx),
        Command::Stratify => commands::stratify(ctx),
        Command::Mms => commands::mms(ctx),
    }
}

/// Exit code for a failed run.
pub fn error_exit_code(err: &Error) -> i32 {
    match err {
        Error::BoundViolation(_) | Error::Inconsistency(_) => 1,
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::Io { .. }
        | Error::Json(_)
        | Error::MalformedHeader(_)
        | Error::TruncatedPayload { .. }
        | Error::NonFiniteSample { .. }
        | Error::InvalidField(_) => 3,
        Error::DegenerateNormal { .. }
        | Error::CoefficientOverflow { .. }
        | Error::EmptySlice
        | Error::OutsideDomain { .. } => 4,
        Error::BlowUp { .. } => 5,
    }
}

/// Exit code for a completed run: 0 iff every check passed.
pub fn checks_exit_code(checks: &[Check]) -> i32 {
    if checks.iter().all(|c| c.passed) {
        0
    } else {
        1
    }
}

/// Parses arguments, runs, prints the checks and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = RunContext::from_cli(&cli).and_then(|ctx| run(cli.command, &ctx));
    match result {
        Ok(checks) => {
            let mut stdout = std::io::stdout().lock();
            for c in &checks {
                // a closed pipe must not turn a finished run into a panic
                let _ = writeln!(stdout, "{}: {}", c.name, if c.passed { "pass" } else { "FAIL" });
            }
            checks_exit_code(&checks)
        }
        Err(e) => {
            eprintln!("error: {e}");
            error_exit_code(&e)
        }
    }
}

/// Writes `value` as pretty JSON with a top-level timestamp added.
pub fn write_report<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    match v.as_object_mut() {
        Some(map) => {
            map.insert(TIMESTAMP_KEY.into(), stamp.into());
        }
        None => {
            v = serde_json::json!({ "value": v, TIMESTAMP_KEY: stamp });
        }
    }
    let text = serde_json::to_string_pretty(&v)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a report and drops the timestamp, for comparisons between runs.
pub fn read_report_without_timestamp(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut v: serde_json::Value = serde_json::from_str(&text)?;
    if let Some(map) = v.as_object_mut() {
        map.remove(TIMESTAMP_KEY);
    }
    Ok(v)
}

/// Writes a CSV table with a header row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = header.join(",") + "\n";
    for r in rows {
        text += &r.join(",");
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
