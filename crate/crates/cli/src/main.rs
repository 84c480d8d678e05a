//! Command-line front end: binds config-file problems, envelopes, and
//! families to the verification, simulation, reduction, and search
//! operations, writing reports and CSV artifacts.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::Overrides;

#[derive(Parser)]
#[command(
    name = "envcert",
    about = "Certify growth/decay envelopes for differential and difference inequalities",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a certificate: envelope conditions on a grid plus the
    /// initial-value gate.
    Verify(CommonArgs),
    /// Integrate the extremal dynamics (or a free-form ODE / recurrence)
    /// and compare against an envelope if one is configured.
    Simulate(CommonArgs),
    /// Lattice feasibility search over a parametric envelope family.
    Search(CommonArgs),
    /// Reduce a vector system to the scalar inequality (or invoke the
    /// example2 builder), optionally chaining into verify.
    Reduce(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the TOML run configuration (see docs/config.md).
    #[arg(long)]
    config: PathBuf,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Horizon override.
    #[arg(long)]
    horizon: Option<f64>,
    /// Residual-grid size override.
    #[arg(long)]
    grid: Option<usize>,
    /// Safety-margin override.
    #[arg(long)]
    margin: Option<f64>,
    /// Seed for sampling-based checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            horizon: self.horizon,
            grid: self.grid,
            margin: self.margin,
            seed: self.seed,
        }
    }
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    let (args, runner): (&CommonArgs, fn(&config::FileConfig, &Overrides) -> Result<i32>) =
        match &cli.command {
            Command::Verify(args) => (args, commands::cmd_verify),
            Command::Simulate(args) => (args, commands::cmd_simulate),
            Command::Search(args) => (args, commands::cmd_search),
            Command::Reduce(args) => (args, commands::cmd_reduce),
        };
    let config = config::load(&args.config)?;
    runner(&config, &args.overrides())
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(1)
        }
    }
}
