//! `geoparam` CLI: drives the parametrization / validation pipeline stage
//! by stage from a single flat config file.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use geoparam::config::PipelineConfig;
use geoparam::pipeline::{self, Workspace};

#[derive(Parser)]
#[command(
    name = "geoparam",
    about = "Parametrize channelized permeability models (PCA / Wasserstein GAN) and validate \
             them with single-phase flow statistics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pipeline configuration file (key=value lines; missing keys default).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Cap worker threads for ensemble propagation (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Override the master seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the conceptual image and crop the realization dataset.
    GenData,
    /// Fit the truncated PCA parametrization on the dataset.
    FitPca,
    /// Train the Wasserstein GAN parametrization on the dataset.
    TrainGan,
    /// Draw realizations from a trained parametrization.
    Sample,
    /// Run the flow problems on a single realization.
    Simulate,
    /// Propagate full ensembles and reduce them to flow statistics.
    Propagate,
    /// Cross-link and validate all artifacts of the run.
    Report,
}

fn load_workspace(cli: &Cli) -> Result<Workspace> {
    let (mut cfg, raw) = match &cli.config {
        Some(path) => PipelineConfig::parse_file(path)?,
        None => (PipelineConfig::default(), String::new()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    Ok(Workspace::new(cfg, raw))
}

fn run(cli: &Cli) -> Result<()> {
    let ws = load_workspace(cli)?;
    let stage = || -> Result<()> {
        match cli.command {
            Command::GenData => pipeline::gen_data(&ws),
            Command::FitPca => pipeline::fit_pca(&ws),
            Command::TrainGan => pipeline::train_gan(&ws),
            Command::Sample => pipeline::sample(&ws),
            Command::Simulate => pipeline::simulate_stage(&ws),
            Command::Propagate => pipeline::propagate_stage(&ws),
            Command::Report => pipeline::report(&ws),
        }
    };
    if ws.cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(ws.cfg.workers)
            .build()
            .map_err(|e| anyhow::anyhow!("cannot build worker pool: {e}"))?
            .install(stage)
    } else {
        stage()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
