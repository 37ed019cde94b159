mod implant;
mod optics;
mod output;
mod photon;
mod population;
mod reproduce;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Io(anyhow::Error),
    #[error(transparent)]
    Failed(anyhow::Error),
}

impl CliError {
    pub fn failed(e: impl std::error::Error + Send + Sync + 'static) -> Self {
        Self::Failed(e.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "nvforge",
    version,
    about = "NV-center implantation and optics toolkit"
)]
struct Cli {
    /// Worker threads for the parallel engines (0 = all cores).
    #[arg(long, global = true, env = "NVFORGE_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo ion implantation into diamond.
    Implant(implant::ImplantArgs),
    /// Peak depths, yields and species differences from implant results.
    Analyze(implant::AnalyzeArgs),
    /// Slab thickness from phonon-sideband etalon fringes.
    Etalon(optics::EtalonArgs),
    /// Simulate a repump-interleaved PLE scan.
    Ple(optics::PleArgs),
    /// Gaussian FWHM of a PLE scan.
    PleFit(optics::PleFitArgs),
    /// Lognormal fits, ECDFs and thickness table for measured linewidths.
    Stats(population::StatsArgs),
    /// Two-photon interference visibility or its linewidth bound.
    Hom(photon::HomArgs),
    /// Heralding-rate gain from a ZPL-fraction enhancement.
    BkGain(photon::BkGainArgs),
    /// Run a pinned end-to-end recipe and write its artifacts.
    Reproduce(reproduce::ReproduceArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Failed(e.into()))?;
    let threads = cli.threads;
    match cli.command {
        Command::Implant(a) => implant::implant(a, threads),
        Command::Analyze(a) => implant::analyze(a),
        Command::Etalon(a) => optics::etalon(a),
        Command::Ple(a) => optics::ple(a),
        Command::PleFit(a) => optics::ple_fit(a),
        Command::Stats(a) => population::stats(a),
        Command::Hom(a) => photon::hom(a),
        Command::BkGain(a) => photon::bk_gain(a),
        Command::Reproduce(a) => reproduce::reproduce(a, threads),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
