use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mintime_cli::{error_json, run_file, run_sweep, Command};

/// Minimal-time and sliding-mode control runs from TOML configs.
#[derive(Parser)]
#[command(name = "mintime", version)]
struct Cli {
    /// Command to run; may instead be given as `command = "..."` in the config.
    #[arg(value_enum)]
    command: Option<Command>,
    #[arg(long, conflicts_with = "sweep", required_unless_present = "sweep")]
    config: Option<PathBuf>,
    /// Output directory (default: `output` from the config, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory of configs run concurrently, each into `<out>/<name>`.
    #[arg(long)]
    sweep: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(dir) = &cli.sweep {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        return match run_sweep(dir, &out, cli.command, cli.seed) {
            Ok(entries) => {
                let worst = entries.iter().map(|e| e.exit_code).max().unwrap_or(0);
                for e in entries.iter().filter(|e| e.exit_code != 0) {
                    eprintln!("{}: {}", e.config, e.error.as_deref().unwrap_or(""));
                }
                ExitCode::from(worst as u8)
            }
            Err(e) => {
                eprintln!("{}", error_json(&e));
                ExitCode::from(e.exit_code() as u8)
            }
        };
    }
    let path = cli.config.expect("clap enforces --config");
    let out = match &cli.out {
        Some(o) => o.clone(),
        None => mintime_cli::config::load(&path)
            .ok()
            .and_then(|c| c.output)
            .map_or_else(|| PathBuf::from("out"), PathBuf::from),
    };
    match run_file(&path, &out, cli.command, cli.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
