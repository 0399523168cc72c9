//! `manifold-gauge`: synthesis, analysis, ablation and layer sweeps over
//! residual-stream activation stores.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or input,
//! 3 missing data, 4 numerically degenerate input.

mod commands;
mod config;
mod render;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use manifold_gauge::{Error, ErrorKind};

use crate::commands::{DatasetArgs, SynthArgs};
use crate::config::{CommonArgs, Settings};

const THREADS_ENV: &str = "MANIFOLD_GAUGE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "manifold-gauge", version, about = "Residual-stream geometry toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the prompt corpus (`prompts.jsonl`) for every level.
    SynthDataset {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        dataset: DatasetArgs,
    },
    /// Write a synthetic activation store with known geometry.
    SynthManifold {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Core geometric metrics per level, plus per-pair scatter data.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Specific-vector ablation; exports patch vectors into the store.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Per-layer group means, divergence basin and phases.
    Layerwise {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Combined report across levels.
    Report {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()).map(Error::kind) {
        Some(ErrorKind::Validation) => 2,
        Some(ErrorKind::MissingData) => 3,
        Some(ErrorKind::Degenerate) => 4,
        Some(ErrorKind::Io) | None => 1,
    }
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")).into()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::SynthDataset { common, dataset } => commands::synth_dataset(&Settings::resolve(&common)?, &dataset),
        Command::SynthManifold { common, synth } => commands::synth_manifold(&Settings::resolve(&common)?, &synth),
        Command::Analyze { common } => commands::analyze_cmd(&Settings::resolve(&common)?),
        Command::Ablate { common } => commands::ablate_cmd(&Settings::resolve(&common)?),
        Command::Layerwise { common } => commands::layerwise_cmd(&Settings::resolve(&common)?),
        Command::Report { common } => commands::report_cmd(&Settings::resolve(&common)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with 2 on usage errors, matching the validation code.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
