//! `teleport`: batch experiments on the trapped-ion teleportation simulator.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical
//! invariant violation, 4 non-convergence (outputs are still written).

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use teleport_core::Basis;

use crate::config::{ExperimentConfig, Mode, Overrides, CONFIG_KEYS};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "teleport", version, about = "Trapped-ion teleportation experiments", after_help = CONFIG_KEYS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Teleportation fidelity of every input, exact and sampled.
    #[command(after_help = CONFIG_KEYS)]
    Teleport(CommonArgs),
    /// Tomography of the teleported state of every input.
    #[command(after_help = CONFIG_KEYS)]
    StateTomo(CommonArgs),
    /// Process tomography of the teleportation channel.
    #[command(after_help = CONFIG_KEYS)]
    ProcTomo(CommonArgs),
    /// Sweep and optimize the phase offset of the unhide pulse.
    #[command(after_help = CONFIG_KEYS)]
    Calibrate(CommonArgs),
    /// Classical measure-and-resend fidelities.
    #[command(after_help = CONFIG_KEYS)]
    Baseline(CommonArgs),
    /// Print the pulse-sequence listing.
    #[command(after_help = CONFIG_KEYS)]
    ExportSequence(ExportArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master random seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Shots per input (teleport) or per basis (tomography).
    #[arg(long, value_name = "N")]
    shots: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads [default: available parallelism].
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Infinite-statistics mode: exact probabilities instead of shots.
    #[arg(long)]
    exact: bool,
}

#[derive(Args, Clone)]
struct ExportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input label [default: first configured input].
    #[arg(long, value_name = "LABEL")]
    input: Option<String>,
    /// Tomography basis (X, Y or Z) instead of the fidelity check.
    #[arg(long, value_parser = parse_basis)]
    basis: Option<Basis>,
}

fn parse_basis(s: &str) -> Result<Basis, String> {
    s.parse::<Basis>().map_err(|e| e.to_string())
}

impl CommonArgs {
    fn resolve(&self, mode: Mode) -> Result<ExperimentConfig, CliError> {
        let overrides = Overrides {
            seed: self.seed,
            shots: self.shots,
            out: self.out.clone(),
            workers: self.workers,
            exact: self.exact,
        };
        let config = ExperimentConfig::resolve(self.config.as_deref(), &overrides, mode)?;
        if let Some(n) = config.workers {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(format!("workers: {e}")))?;
        }
        Ok(config)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Teleport(a) => commands::teleport(&a.resolve(Mode::Teleport)?).map(drop),
        Command::StateTomo(a) => commands::state_tomo(&a.resolve(Mode::StateTomo)?).map(drop),
        Command::ProcTomo(a) => commands::proc_tomo(&a.resolve(Mode::ProcTomo)?).map(drop),
        Command::Calibrate(a) => commands::calibrate(&a.resolve(Mode::Calibrate)?).map(drop),
        Command::Baseline(a) => commands::baseline(&a.resolve(Mode::Baseline)?).map(drop),
        Command::ExportSequence(a) => {
            let config = a.common.resolve(Mode::ExportSequence)?;
            commands::export_sequence(&config, a.input.as_deref(), a.basis).map(drop)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
