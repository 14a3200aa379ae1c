mod commands;
mod config;
mod dataset;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphpae::ErrorClass;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] graphpae::Error),
}

impl From<graphpae_tensor::TensorError> for CliError {
    fn from(e: graphpae_tensor::TensorError) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Argument => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            },
        }
    }
}

/// Positional graph autoencoder: spectra, pretraining and linear probes.
#[derive(Debug, Parser)]
#[command(name = "graphpae", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Band-wise frequency magnitudes before and after a corruption.
    SpectralAnalysis(commands::SpectralArgs),
    /// Self-supervised pretraining into a run directory.
    Pretrain(commands::PretrainArgs),
    /// Linear probes on frozen embeddings from a run directory.
    Probe(commands::ProbeArgs),
    /// Writes a synthetic dataset.
    MakeSynth(commands::SynthArgs),
}

/// Settings shared by `pretrain` and `probe`.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// `key=value` file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set encoder.layers=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SpectralAnalysis(a) => commands::spectral_analysis(a),
        Command::Pretrain(a) => commands::pretrain(a),
        Command::Probe(a) => commands::probe(a),
        Command::MakeSynth(a) => commands::make_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
