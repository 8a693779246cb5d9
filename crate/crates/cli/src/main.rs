//! `noisefield` command-line front-end.
//!
//! Exit codes: 0 success, 2 configuration or input validation, 3 numerical
//! failure, 4 I/O.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "noisefield", version, about = "Impulsive noise simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a trace from a configuration file.
    Simulate(SimulateArgs),
    /// Moments, empirical pdf and ccdf of a trace.
    Analyze(AnalyzeArgs),
    /// Welch and Burg spectra, plus the closed-form spectrum when a config is given.
    Psd(PsdArgs),
    /// Fit alpha-stable and Class A models and score both.
    Fit(FitArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Adds closed-form cumulants of the configured field.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PsdArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    segment: Option<usize>,
    /// Burg model order.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a.config, a.seed, a.out_dir),
        Command::Analyze(a) => commands::analyze(&a.trace, a.config.as_deref(), a.bins, a.out_dir),
        Command::Psd(a) => commands::psd(&a.trace, a.config.as_deref(), a.segment, a.order, a.out_dir),
        Command::Fit(a) => commands::fit(&a.trace, a.config.as_deref(), a.bins, a.out_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
