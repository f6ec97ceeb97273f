//! Experiment driver for the adaptive social learning laboratory.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::SweepAxis;
pub use config::{ExperimentConfig, Overrides, Resolved};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "asl", version, about = "Adaptive social learning simulation and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One seeded trajectory, stationary or with scripted changes.
    Simulate(CommonArgs),
    /// Steady-state descriptors, concentration sweep and normality data.
    SteadyState(CommonArgs),
    /// Error exponents, Gaussian curve and optional Monte Carlo slope.
    Exponents(CommonArgs),
    /// Transient constants, adaptation times and bound curves.
    Transient(CommonArgs),
    /// Markov environment runs for the adaptive and the traditional strategy.
    Nonstationary(CommonArgs),
    /// Grid sweep over the step size or the combination policy.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Step size of the configured strategy.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Monte Carlo repetitions.
    #[arg(long)]
    pub reps: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    Delta,
    Rule,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "delta")]
    pub axis: AxisArg,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            delta: self.delta,
            reps: self.reps,
            workers: self.workers,
            out: self.out.clone(),
        });
        cfg.resolve()
    }
}

/// Run one parsed invocation; returns the path of the run summary.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    match &cli.command {
        Command::Simulate(a) => commands::cmd_simulate(&a.resolve()?),
        Command::SteadyState(a) => commands::cmd_steady_state(&a.resolve()?),
        Command::Exponents(a) => commands::cmd_exponents(&a.resolve()?),
        Command::Transient(a) => commands::cmd_transient(&a.resolve()?),
        Command::Nonstationary(a) => commands::cmd_nonstationary(&a.resolve()?),
        Command::Sweep(a) => {
            let axis = match a.axis {
                AxisArg::Delta => SweepAxis::Delta,
                AxisArg::Rule => SweepAxis::Rule,
            };
            commands::cmd_sweep(&a.common.resolve()?, axis)
        }
    }
}
