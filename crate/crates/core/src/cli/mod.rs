//! Configuration-driven runs: resolve a JSON config, execute a single trial
//! or a batch, and write `meta.json`, `summary.json` and trajectory CSVs.

mod config;
mod export;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::{
    blob_hash, GridConfig, Overrides, ProblemKind, ResolvedConfig, ResolvedGrid, RunConfig, RunMode, Source,
};
pub use export::{
    export_trajectory, fmt_f64, parse_trajectory_csv, write_trajectory_csv, CsvRow, CSV_HEADER,
};

use crate::error::{io, Error, Result};
use crate::filter::FilterMode;
use crate::montecarlo::{run_batch, McSummary};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "scbf",
    version,
    about = "Control barrier function safety filters for economic control problems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a run and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// off | cbf | scbf | scbf_legacy
        #[arg(long)]
        filter: Option<FilterMode>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a config and print it fully resolved.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    config_path: String,
    config_hash: String,
    resolved_config_hash: String,
    resolved: &'a ResolvedConfig,
    notes: Vec<&'static str>,
}

const NOTES: &[&str] = &[
    "market share is clamped to [0, 1] after each step; clamps are logged as events",
    "values tagged implementer-default are not taken from the source experiments",
];

/// Paths written by a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub meta: PathBuf,
    pub summary: PathBuf,
    pub trajectories: Vec<PathBuf>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })?;
    std::fs::write(path, text + "\n").map_err(|e| io(path, e))
}

/// Run a resolved config. `config_bytes` is hashed into `meta.json`.
pub fn execute(
    resolved: &ResolvedConfig,
    config_path: &Path,
    config_bytes: &[u8],
) -> Result<(RunArtifacts, McSummary)> {
    let exp = resolved.experiment()?;
    let out = PathBuf::from(&resolved.output_dir);
    std::fs::create_dir_all(&out).map_err(|e| io(&out, e))?;

    let resolved_json = serde_json::to_vec(resolved).expect("config serializes");
    let meta = Meta {
        tool: "scbf",
        version: env!("CARGO_PKG_VERSION"),
        config_path: config_path.display().to_string(),
        config_hash: blob_hash(config_bytes),
        resolved_config_hash: blob_hash(&resolved_json),
        resolved,
        notes: NOTES.to_vec(),
    };
    let meta_path = out.join("meta.json");
    write_json(&meta_path, &meta)?;

    let batch = run_batch(&exp, &resolved.mc_config())?;
    let mut trajectories = Vec::new();
    match resolved.mode {
        RunMode::Single => {
            if let Some((_, tr)) = batch.trajectories.first() {
                let p = out.join("trajectory.csv");
                export_trajectory(tr, &p)?;
                trajectories.push(p);
            }
        }
        RunMode::MonteCarlo => {
            if !batch.trajectories.is_empty() {
                let dir = out.join("trajectories");
                std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
                for (i, tr) in &batch.trajectories {
                    let p = dir.join(format!("trial_{i:06}.csv"));
                    export_trajectory(tr, &p)?;
                    trajectories.push(p);
                }
            }
        }
    }
    let summary_path = out.join("summary.json");
    write_json(&summary_path, &batch.summary)?;
    if let Some(f) = batch.summary.failures.first() {
        if batch.summary.completed_trials == 0 {
            return Err(Error::Contract(format!("all trials failed; first: {}", f.error)));
        }
    }
    Ok((
        RunArtifacts { output_dir: out, meta: meta_path, summary: summary_path, trajectories },
        batch.summary,
    ))
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn load(path: &Path) -> std::result::Result<(RunConfig, Vec<u8>), Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let text =
        String::from_utf8(bytes.clone()).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok((RunConfig::from_json(&text)?, bytes))
}

/// Errors from loading or resolving a config are configuration errors.
fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Dispatch a parsed command line; returns the process exit code.
pub fn run_cli(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Validate { config } => load(&config)
            .and_then(|(c, _)| c.resolve(&Overrides::default()))
            .map_err(as_config)
            .map(|r| println!("{}", serde_json::to_string_pretty(&r).expect("config serializes"))),
        Command::Run { config, trials, seed, filter, out, threads } => {
            let ov = Overrides {
                n_trials: trials,
                seed,
                filter,
                output_dir: out.map(|p| p.display().to_string()),
                threads,
            };
            match load(&config).and_then(|(c, b)| c.resolve(&ov).map(|r| (r, b))).map_err(as_config) {
                Err(e) => Err(e),
                Ok((resolved, bytes)) => execute(&resolved, &config, &bytes).map(|(art, s)| {
                    let line = serde_json::json!({
                        "output_dir": art.output_dir,
                        "completed_trials": s.completed_trials,
                        "violating_steps": s.violating_steps,
                        "safe_timestep_fraction": s.safe_timestep_fraction,
                        "mean_solve_ms": s.mean_solve_ms,
                    });
                    println!("{line}");
                }),
            }
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            let record = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string(), "exit_code": code }
            });
            eprintln!("{record}");
            code
        }
    }
}
