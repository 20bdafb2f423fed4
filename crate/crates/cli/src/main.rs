//! `pointsim`: simulate mid-air pointing movements, identify torque ranges and fit cost weights.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pointsim::error::Error;

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "POINTSIM_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "pointsim", version, about = "Biomechanical simulation of mid-air pointing with model predictive control")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration TOML.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set mpc.horizon=12`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Noise seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Interaction technique preset.
    #[arg(long, global = true)]
    pub technique: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one movement, or every ISO transition from rest.
    Simulate(commands::SimulateArgs),
    /// Run the full ISO target sequence as one continuous session.
    IsoRun,
    /// Identify torque ranges from reference trajectories.
    Cfat(commands::CfatArgs),
    /// Fit cost weights (r1, r2) to a reference dataset with CMA-ES.
    FitWeights(commands::FitArgs),
    /// Open-loop deviation curves for several horizons against a long reference horizon.
    Turnpike(commands::TurnpikeArgs),
    /// Generate synthetic reference trajectories at known cost weights.
    SynthDataset(commands::SynthArgs),
}

fn configure_workers() -> Result<(), Error> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config { origin: WORKERS_ENV.into(), message: format!("`{raw}` is not a positive integer") })?;
    // Fails only if the pool was already built, which cannot happen this early.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_workers()?;
    let c = &cli.common;
    match cli.command {
        Command::Simulate(a) => commands::simulate(c, &a),
        Command::IsoRun => commands::iso_run(c),
        Command::Cfat(a) => commands::cfat(c, &a),
        Command::FitWeights(a) => commands::fit_weights(c, &a),
        Command::Turnpike(a) => commands::turnpike(c, &a),
        Command::SynthDataset(a) => commands::synth_dataset(c, &a),
    }
}

/// Exit status per error category; usage errors exit with 2 through clap.
fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "config" | "invalid-argument" | "invalid-model" | "invalid-technique" => 3,
        "io" => 4,
        "schema" | "data" | "length-mismatch" => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
