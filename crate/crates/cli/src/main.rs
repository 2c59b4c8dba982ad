//! `tatkit`: run experiment configs stage by stage or as a whole pipeline.
//!
//! Exit codes: 0 success, 2 invalid config or arguments, 3 numerical
//! failure, 4 i/o failure.

mod config;
mod error;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use crate::config::{Overrides, StageKind};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "tatkit", version, about = "Photoacoustic reconstruction pipelines driven by JSON configs")]
struct Cli {
    /// Worker threads for parallel work inside a stage; 0 or unset uses all cores.
    #[arg(long, global = true, env = "TATKIT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the phantom stages of a config.
    Phantom(RunArgs),
    /// Run the simulate stages: wave solver or spherical integrals.
    Simulate(RunArgs),
    /// Run the reconstruct stages: fbp, series or time reversal.
    Reconstruct(RunArgs),
    /// Run the synthetic focusing stages.
    Focus(RunArgs),
    /// Run the conductivity reconstruction stages.
    Aet(AetArgs),
    /// Run the metrics stages.
    Metrics(RunArgs),
    /// Run every stage in order.
    Pipeline(AetArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Replace the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Replace the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct AetArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Regularization weight for every AET stage.
    #[arg(long)]
    beta: Option<f64>,
}

fn execute(run: &RunArgs, beta: Option<f64>, only: Option<StageKind>) -> Result<(), CliError> {
    let ov = Overrides { seed: run.seed, output_dir: run.out_dir.clone(), beta };
    let cfg = config::load(&run.config, &ov)?;
    log::info!("{}: config hash {}", cfg.name, cfg.hash);
    let written = stages::run(&cfg, only)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match &cli.command {
        Command::Phantom(a) => execute(a, None, Some(StageKind::Phantom)),
        Command::Simulate(a) => execute(a, None, Some(StageKind::Simulate)),
        Command::Reconstruct(a) => execute(a, None, Some(StageKind::Reconstruct)),
        Command::Focus(a) => execute(a, None, Some(StageKind::Focus)),
        Command::Aet(a) => execute(&a.run, a.beta, Some(StageKind::Aet)),
        Command::Metrics(a) => execute(a, None, Some(StageKind::Metrics)),
        Command::Pipeline(a) => execute(&a.run, a.beta, None),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
