mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inforank::pipeline::TrainerKind;
use inforank::Error;

use commands::{Common, SweepChoice};
use config::{load_config, ExperimentConfig};

#[derive(Parser)]
#[command(name = "inforank", version, about = "Unbiased learning-to-rank experiments")]
struct Cli {
    /// TOML config, or a manifest.json to replay its run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Allow writing into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a labeled dataset.
    Generate,
    /// Split a dataset, fit the logging ranker and simulate click logs.
    Simulate {
        /// dataset.json, or a directory written by `generate`.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train models on the logs written by `simulate`.
    Train {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long, value_parser = parse_trainer)]
        trainer: Option<TrainerKind>,
        /// Weight of the information term.
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Score checkpoints on the test split.
    Evaluate {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        checkpoints: PathBuf,
    },
    /// Bias-degree, eta and training-fraction grids.
    Sweep {
        #[arg(long, value_enum, default_value = "all")]
        sweep: SweepChoice,
        #[arg(long, value_parser = parse_trainer)]
        trainer: Option<TrainerKind>,
    },
    /// Check the probabilistic identities on enumerable worlds.
    OracleCheck,
}

fn parse_trainer(s: &str) -> Result<TrainerKind, String> {
    TrainerKind::parse(s).map_err(|e| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        e if e.is_numerical() => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let (mut config, manifest) = match &cli.config {
        Some(p) => load_config(p)?,
        None => (ExperimentConfig::default(), None),
    };
    if let Some(s) = cli.seed {
        config.seeds = vec![s];
    }
    config.validate()?;
    let out = cli
        .out
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
    let common = Common {
        config,
        out,
        force: cli.force,
    };
    // a replayed manifest supplies the overrides it was recorded with
    let recorded = |m: &Option<config::Manifest>| m.as_ref().map(|m| (m.trainer, m.eta)).unwrap_or((None, None));
    match cli.command {
        Command::Generate => commands::generate(&common),
        Command::Simulate { dataset } => commands::simulate(&common, dataset.as_deref()),
        Command::Train { logs, trainer, eta } => {
            let (t0, e0) = recorded(&manifest);
            commands::train(&common, &logs, trainer.or(t0), eta.or(e0))
        }
        Command::Evaluate { logs, checkpoints } => commands::evaluate(&common, &logs, &checkpoints),
        Command::Sweep { sweep, trainer } => commands::sweep(&common, sweep, trainer.or(recorded(&manifest).0)),
        Command::OracleCheck => commands::oracle_check(&common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
