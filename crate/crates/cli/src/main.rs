//! `bermuda`: price Bermudan options, reproduce reference tables, benchmark the engine.
//!
//! Precedence: built-in defaults, then `--config FILE`, then individual flags.
//! Exit codes: 0 success, 1 config error, 2 determinism failure, 3 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use bermuda_core::Method;
use clap::{Args, Parser, Subcommand};

use crate::commands::TableId;
use crate::config::{Overrides, RunConfig};

/// Invalid input; exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

/// Prices differ across worker counts; exit code 2.
#[derive(Debug)]
pub struct DeterminismError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::fmt::Display for DeterminismError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "determinism violated: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}
impl std::error::Error for DeterminismError {}

#[derive(Parser)]
#[command(name = "bermuda", version, about = "Monte Carlo pricing of Bermudan max-call options")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat JSON config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    s0: Option<f64>,
    /// Number of assets.
    #[arg(long)]
    d: Option<usize>,
    /// Master seed; a time-based seed is chosen and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Tasks per parallel phase; defaults to one per worker.
    #[arg(long)]
    nb_tasks: Option<usize>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the exercise rule and price.
    Price {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workers: Option<usize>,
        /// Per-task timing CSV (phase, task_id, seconds).
        #[arg(long)]
        timings: Option<PathBuf>,
    },
    /// Rerun a reference experiment as CSV.
    Table {
        #[arg(value_enum)]
        table: TableId,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workers: Option<usize>,
        /// Multiplies N, N1 and N2; must lie in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Time each phase across worker counts and check determinism.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated worker counts.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        workers: Vec<usize>,
        #[arg(long)]
        timings: Option<PathBuf>,
    },
    /// Single-asset lattice references (requires --d 1).
    Oracle {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common, workers: Option<usize>) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        method: common.method,
        s0: common.s0,
        d: common.d,
        seed: common.seed,
        workers,
        nb_tasks: common.nb_tasks,
        out: common.out.clone(),
    });
    Ok(cfg)
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Price { common, workers, timings } => commands::price(load(&common, workers)?.resolve()?, timings.as_deref()),
        Command::Table { table, common, workers, scale } => commands::table(load(&common, workers)?, table, scale),
        Command::Bench { common, workers, timings } => {
            commands::bench(load(&common, None)?.resolve()?, &workers, timings.as_deref())
        }
        Command::Oracle { common } => commands::oracle(load(&common, None)?.resolve()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = if e.downcast_ref::<ConfigError>().is_some() {
                1
            } else if e.downcast_ref::<DeterminismError>().is_some() {
                2
            } else {
                3
            };
            ExitCode::from(code)
        }
    }
}
