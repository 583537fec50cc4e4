//! Batch driver for the algorithm-selection study.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::RunOptions;
pub use config::StudyConfig;
pub use error::{CliError, ExitKind};

#[derive(Debug, Parser)]
#[command(name = "recsel", version, about = "Meta-learned recommender algorithm selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Study config (TOML).
    #[arg(long, global = true, default_value = "study.toml")]
    pub config: PathBuf,

    /// Worker threads for build-meta and select. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Overrides the config's root seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Per-fit time budget in seconds; overrides `fit_budget_seconds`.
    #[arg(long, global = true)]
    pub budget: Option<f64>,

    /// Drop records with p >= 0.05 before aggregating.
    #[arg(long, global = true)]
    pub filter_significant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Prune, split and describe every corpus dataset.
    Prepare,
    /// Fit and score the algorithm zoo on every prepared dataset.
    BuildMeta,
    /// Leave-one-out evaluation of the meta-learners.
    Select,
    /// Generate the synthetic corpus from the [synth] section.
    Synth,
    /// Print the aggregate table of the last select run.
    Report,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = StudyConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(b) = cli.budget {
        cfg.set_budget(b)?;
    }
    let jobs = match cli.jobs {
        Some(0) => return Err(CliError::usage("--jobs must be >= 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let opts = RunOptions {
        jobs,
        filter_significant: cli.filter_significant,
    };
    match cli.command {
        Command::Synth => {
            commands::cmd_synth(&cfg)?;
        }
        Command::Prepare => {
            let m = commands::cmd_prepare(&cfg)?;
            log::info!("{} datasets prepared, {} excluded", m.datasets.len(), m.excluded.len());
        }
        Command::BuildMeta => {
            commands::cmd_build_meta(&cfg, &opts)?;
        }
        Command::Select => {
            let report = commands::cmd_select(&cfg, &opts)?;
            print!("{}", commands::summary(&report));
        }
        Command::Report => print!("{}", commands::cmd_report(&cfg, &opts)?),
    }
    Ok(())
}
