mod config;
mod error;
mod stages;
mod store;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::config::{Config, Overrides};
use crate::stages::Context;
use crate::store::Store;

/// Estimate firm-level effects of an export shock with shock-aware and
/// shock-unaware machines.
#[derive(Parser, Debug)]
#[command(name = "exportshock", version, about)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Artifact root, overriding the config file.
    #[arg(long, global = true, env = "EXPORTSHOCK_ARTIFACTS", value_name = "DIR")]
    artifacts: Option<PathBuf>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Seed for the generator and every model, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Simulate a transaction panel with a known shock.
    Generate,
    /// Ingest transactions and build monthly feature panels.
    Featurize,
    /// Firm status and destination and sector growth tables.
    Descriptives,
    /// Fit the SUM and SAM predictions for every protocol month.
    Train,
    /// Compare the model zoo out of sample.
    Evaluate,
    /// Stack the model zoo with non-negative weights.
    Superlearner,
    /// Firm-level effects and monthly averages.
    Effects,
    /// In-time placebo check on months without a shock.
    Placebo,
    /// Effect tree, heterogeneity regressions and subgroup means.
    Tree,
    /// Collect the headline tables and chart.
    Report,
}

fn run(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| error::Failure::Config("--config: a configuration file is required".into()))?;
    let overrides = Overrides { artifacts: cli.artifacts.clone(), seed: cli.seed };
    let config = Config::load(path, &overrides)?;
    let store = Store::new(config.artifact_root());
    let ctx = Context { config: &config, store: &store };
    let stage = match cli.command {
        Command::Generate => stages::generate,
        Command::Featurize => stages::featurize,
        Command::Descriptives => stages::descriptives,
        Command::Train => stages::train,
        Command::Evaluate => stages::evaluate,
        Command::Superlearner => stages::superlearner,
        Command::Effects => stages::effects_stage,
        Command::Placebo => stages::placebo,
        Command::Tree => stages::tree,
        Command::Report => stages::report,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(error::Failure::Config("--threads: must be at least 1".into()).into());
        }
        pool = pool.num_threads(n);
    }
    pool.build()?.install(|| stage(&ctx))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(error::exit_code(&e))
        }
    }
}
