//! Thin command-line front end; all logic lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hifinet::config::ExperimentConfig;
use hifinet::pipeline;

#[derive(Parser)]
#[command(
    name = "hifinet",
    about = "Two-stage WSN fault diagnosis: fault injection, edge + graph training, evaluation, and the energy tradeoff study",
    version
)]
struct Cli {
    /// Experiment config file (TOML).
    #[arg(short, long, global = true, default_value = "experiment.toml")]
    config: PathBuf,

    /// Directory all relative paths resolve against.
    #[arg(short = 'C', long, global = true, default_value = ".")]
    workdir: PathBuf,

    /// Override any scalar config field, e.g. --set windows.w=12
    /// (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the clean panel and topology without injecting faults.
    GenSynthetic,
    /// Build one injected dataset per configured fault rate.
    Inject,
    /// Train the edge classifier on a dataset.
    TrainEdge {
        /// Fault rate selecting the dataset; all configured rates if omitted.
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Train the graph stage on frozen edge outputs.
    TrainIgn {
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Evaluate both stages on the test split and emit reports.
    Evaluate {
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Run the accuracy/energy tradeoff study.
    Tradeoff {
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Full pipeline: inject, train both stages, evaluate, tradeoff.
    All,
}

fn rates_for(config: &ExperimentConfig, rate: Option<f64>) -> Vec<f64> {
    match rate {
        Some(r) => vec![r],
        None => config.injection.rates.clone(),
    }
}

fn run(cli: Cli) -> hifinet::Result<()> {
    let config = ExperimentConfig::load(&cli.config, &cli.overrides, &cli.workdir)?;
    match cli.command {
        Command::GenSynthetic => {
            pipeline::cmd_gen_synthetic(&config)?;
        }
        Command::Inject => {
            pipeline::cmd_inject(&config)?;
        }
        Command::TrainEdge { rate } => {
            for r in rates_for(&config, rate) {
                pipeline::cmd_train_edge(&config, r)?;
            }
        }
        Command::TrainIgn { rate } => {
            for r in rates_for(&config, rate) {
                pipeline::cmd_train_ign(&config, r)?;
            }
        }
        Command::Evaluate { rate } => {
            for r in rates_for(&config, rate) {
                pipeline::cmd_evaluate(&config, r)?;
            }
        }
        Command::Tradeoff { rate } => {
            for r in rates_for(&config, rate) {
                pipeline::cmd_tradeoff(&config, r)?;
            }
        }
        Command::All => {
            pipeline::cmd_all(&config)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
