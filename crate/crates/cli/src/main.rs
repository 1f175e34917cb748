//! `hbt`: photon-number-resolving HBT simulations from TOML experiment files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::Session;
use crate::config::{Experiment, SweepMode};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "hbt",
    version,
    about = "Photon-number-resolving Hanbury Brown-Twiss simulator"
)]
struct Cli {
    /// Experiment description (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Built-in experiment: fml, lnt, lat or ladder.
    #[arg(long, global = true, value_name = "NAME", conflicts_with = "config")]
    preset: Option<String>,

    /// Random seed; overrides the config. Drawn from entropy when absent.
    // capped at i64::MAX so it survives the TOML manifest
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,

    /// Output directory [default: "." or "fixtures" for the fixtures command].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Monte Carlo worker count; results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    shards: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Avalanche-voltage density on the configured grid.
    AvalancheHist,
    /// Monte Carlo coincidence histogram and gamma estimate.
    Simulate,
    /// Gamma as a function of the detector-2 setting.
    Sweep {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Closed-form correlations and exact click probabilities.
    Analytic,
    /// Regenerate the golden fixture files.
    Fixtures,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    ThresholdApprox,
    WindowExact,
    Voltage,
    MonteCarlo,
}

impl From<ModeArg> for SweepMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ThresholdApprox => SweepMode::ThresholdApprox,
            ModeArg::WindowExact => SweepMode::WindowExact,
            ModeArg::Voltage => SweepMode::Voltage,
            ModeArg::MonteCarlo => SweepMode::MonteCarlo,
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Command::Fixtures = cli.command {
        return commands::fixtures(&cli.out.unwrap_or_else(|| PathBuf::from("fixtures")));
    }
    let (exp, label) = match (&cli.config, &cli.preset) {
        (Some(path), _) => (Experiment::load(path)?, path.display().to_string()),
        (None, Some(name)) => (Experiment::preset(name)?, format!("preset:{name}")),
        (None, None) => return Err(CliError::Config("pass --config <PATH> or --preset <NAME>".into())),
    };
    let name = match cli.command {
        Command::AvalancheHist => "avalanche-hist",
        Command::Simulate => "simulate",
        Command::Sweep { .. } => "sweep",
        Command::Analytic => "analytic",
        Command::Fixtures => unreachable!(),
    };
    let out = cli.out.unwrap_or_else(|| PathBuf::from("."));
    commands::prepare_dir(&out)?;
    let mut session = Session::new(name, label, exp, out, cli.seed, cli.shards.map(|n| n as usize));
    match cli.command {
        Command::AvalancheHist => commands::avalanche_hist(&mut session)?,
        Command::Simulate => commands::simulate(&mut session)?,
        Command::Sweep { mode } => commands::sweep(&mut session, mode.map(Into::into))?,
        Command::Analytic => commands::analytic(&mut session)?,
        Command::Fixtures => unreachable!(),
    }
    let manifest = session.finish()?;
    println!("manifest {}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hbt: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
