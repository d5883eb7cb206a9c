use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hedgefee_cli::{promote, run_task, ExperimentConfig, Task};

#[derive(Parser)]
#[command(
    name = "hedgefee",
    version,
    about = "Indifference fees of broker hedging contracts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config. Omitted sections take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir` from the config.
    #[arg(long, global = true, env = "HEDGEFEE_OUT")]
    out: Option<PathBuf>,
    /// Monte Carlo seed, overriding `sim.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Fee of each configured contract at (0, q0, S0).
    Fees,
    /// Simulated trajectories for plotting.
    Paths,
    /// Expected payoffs at the indifference fee.
    Statarb,
    /// Fees over the approval-probability grid.
    Regulatory,
    /// Fees of the TWAP-benchmarked contracts.
    Twap,
    /// Fees over the configured parameter sweep.
    Sweep,
    /// Every table plus a manifest of file digests.
    ReproduceAll,
}

impl From<Command> for Task {
    fn from(c: Command) -> Self {
        match c {
            Command::Fees => Task::Fees,
            Command::Paths => Task::Paths,
            Command::Statarb => Task::Statarb,
            Command::Regulatory => Task::Regulatory,
            Command::Twap => Task::Twap,
            Command::Sweep => Task::Sweep,
            Command::ReproduceAll => Task::ReproduceAll,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot size the thread pool")?;
    }
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    let out = cli.out.unwrap_or_else(|| cfg.output_dir.clone());
    let artifacts = run_task(cli.command.into(), &cfg)?;
    promote(&artifacts, &out)?;
    for name in artifacts.names() {
        println!("{}", out.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
