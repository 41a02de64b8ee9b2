//! `aet`: config-driven driver for the acousto-electric tomography pipeline.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aet", version, about = "Acousto-electric tomography under uncertain sound speed")]
struct Cli {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set sampler.mu=0.1` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads, overriding the config.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for the sampler and the ensemble master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the disk mesh.
    Mesh,
    /// Draw the true sound speed and build the assumed one.
    SampleC,
    /// Simulate all sources under the true and the assumed speed.
    Simulate,
    /// Assemble the forward operators from the wave records.
    Assemble,
    /// Phantom power densities and linearized signals from the true operator.
    SynthData,
    /// Optimal-β Tikhonov reconstruction of the power densities with the assumed operator.
    ReconH,
    /// Conductivity from the reconstructed power densities.
    ReconSigma,
    /// Monte Carlo ensemble over sound-speed realizations.
    Ensemble,
    /// Reconstruction error and β* against the perturbation strength.
    MuSweep,
    /// Run the acceptance suite.
    Verify {
        /// Comma-separated criterion numbers; all when omitted.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
    },
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Pipeline(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Pipeline(_) => 3,
            Failure::Verification(_) => 4,
        }
    }
}

impl From<aet_core::AetError> for Failure {
    fn from(e: aet_core::AetError) -> Self {
        Failure::Pipeline(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut overrides = cli.overrides;
    if let Some(seed) = cli.seed {
        overrides.push(format!("sampler.seed={seed}"));
        overrides.push(format!("ensemble.master_seed={seed}"));
    }
    if let Some(t) = cli.threads {
        overrides.push(format!("threads={t}"));
    }
    let mut config = config::load(cli.config.as_deref(), &overrides).map_err(Failure::Config)?;
    if let Some(out) = cli.out {
        config.output = out;
    }
    if config.threads > 0 {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build_global();
    }
    commands::dispatch(&cli.command, &config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Config(m) => ("config error", m),
                Failure::Pipeline(m) => ("pipeline error", m),
                Failure::Verification(m) => ("verification failed", m),
            };
            eprintln!("aet: {kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}
