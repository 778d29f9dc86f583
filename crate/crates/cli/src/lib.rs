//! Batch runner: reads a TOML run configuration, dispatches one command and
//! writes `manifest.json`, `report.json` and per-command CSV files.

pub mod config;
mod commands;
pub mod output;

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use mintime::parallel::{self, Execution};
use serde::Serialize;

pub use config::{Command, ConfigError, RunConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical { command: Command, error: mintime::Error },
    Io(io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical { .. } => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "invalid config: {e}"),
            RunError::Numerical { command, error } => write!(f, "{command} failed: {error}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    toolkit: &'static str,
    version: &'static str,
    command: Command,
    seed: u64,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct ErrorPayload<'a> {
    command: Command,
    message: String,
    error: &'a mintime::Error,
}

/// Runs a resolved config into `out`. The manifest is written before validation
/// and computation; numerical failures also leave `error.json` behind.
pub fn run(config: &RunConfig, out: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(out)?;
    let command = config
        .command
        .ok_or_else(|| ConfigError::new("command", "missing"))?;
    output::write_json(
        out,
        "manifest.json",
        &Manifest {
            toolkit: "mintime",
            version: VERSION,
            command,
            seed: config.seed(),
            config,
        },
    )?;
    config.validate()?;
    match commands::dispatch(config, out) {
        Err(RunError::Numerical { command, error }) => {
            let payload = ErrorPayload {
                command,
                message: error.to_string(),
                error: &error,
            };
            output::write_json(out, "error.json", &payload)?;
            Err(RunError::Numerical { command, error })
        }
        other => other,
    }
}

/// Serialized form of a failure, for stderr.
pub fn error_json(e: &RunError) -> String {
    match e {
        RunError::Config(c) => serde_json::json!({"kind": "config", "field": c.field, "message": c.message}),
        RunError::Numerical { command, error } => {
            serde_json::json!({"kind": "numerical", "command": command, "message": error.to_string(), "error": error})
        }
        RunError::Io(io) => serde_json::json!({"kind": "io", "message": io.to_string()}),
    }
    .to_string()
}

/// Loads, resolves and runs one config file.
pub fn run_file(path: &Path, out: &Path, command: Option<Command>, seed: Option<u64>) -> Result<(), RunError> {
    let cfg = config::load(path)?.resolve(command, seed)?;
    run(&cfg, out)
}

#[derive(Debug, Serialize)]
pub struct SweepEntry {
    pub config: String,
    pub output: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs every `*.toml` in `dir` on worker threads, each into `out/<stem>`.
/// Writes `sweep.json` and returns the entries in file-name order.
pub fn run_sweep(dir: &Path, out: &Path, command: Option<Command>, seed: Option<u64>) -> Result<Vec<SweepEntry>, RunError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(ConfigError::new("sweep", format!("no .toml files in {}", dir.display())).into());
    }
    std::fs::create_dir_all(out)?;
    let entries = parallel::map(Execution::Parallel, &files, |path| {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let target = out.join(&stem);
        let result = run_file(path, &target, command, seed);
        SweepEntry {
            config: path.display().to_string(),
            output: target.display().to_string(),
            exit_code: result.as_ref().map_or_else(|e| e.exit_code(), |_| 0),
            error: result.err().map(|e| e.to_string()),
        }
    });
    output::write_json(out, "sweep.json", &entries)?;
    Ok(entries)
}
