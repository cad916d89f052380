//! Thin command-line front end: parses flags, loads the config, and hands
//! off to the experiment harness in the library. Exit codes: 0 success,
//! 2 config error, 3 budget error, 4 numerical assertion failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dmc::config::{ExperimentConfig, ExperimentKind};
use dmc::experiments;

#[derive(Parser)]
#[command(
    name = "dmc",
    about = "Markov channel modeling and receiver simulation for DNA microarray reception"
)]
struct Cli {
    /// Config file (flat `key = value` lines; see README for the key list).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trial count override.
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Simulation backend override (`per_molecule` or `aggregate`).
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrium gain, settling time, and interface balance of the channel.
    Characterize,
    /// Channel impulse response and state-occupancy heatmap CSVs.
    Cir,
    /// Symbol-spaced ISI taps, differential taps, and return probabilities.
    Taps,
    /// Theoretical and Monte Carlo lag correlation of the counting noise.
    NoiseStats,
    /// Simulate bound-count traces and dump them.
    Simulate,
    /// BER sweep over symbol intervals and molecule budgets.
    BerSweep,
    /// Calibrate the unbinding rate to settling-time targets at fixed K_D.
    CalibrateKoff,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Characterize => ExperimentKind::Characterize,
            Command::Cir => ExperimentKind::Cir,
            Command::Taps => ExperimentKind::Taps,
            Command::NoiseStats => ExperimentKind::NoiseStats,
            Command::Simulate => ExperimentKind::Simulate,
            Command::BerSweep => ExperimentKind::BerSweep,
            Command::CalibrateKoff => ExperimentKind::CalibrateKoff,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> dmc::Result<Vec<PathBuf>> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    if let Some(backend) = &cli.backend {
        cfg.backend = backend.parse()?;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    experiments::run_one(&cfg, cli.command.kind())
}
