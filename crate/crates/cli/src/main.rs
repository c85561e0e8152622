use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use emplearn_cli::experiment::{self, in_stage, Stage};
use emplearn_cli::replicate::{run_replications, summary_csv};
use emplearn_cli::report::emit_report;
use emplearn_cli::{exit_code, ExperimentConfig};

#[derive(Parser)]
#[command(name = "emplearn", about = "Simulate, estimate and summarise employer-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Configuration file; defaults apply to every key it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `simulation.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides `replication.n_reps`.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Overrides `replication.jobs`.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel into the output directory.
    Simulate,
    /// Estimate profiles and the mixing fit from the panel in the output directory.
    Estimate,
    /// Compute returns and the IRR split from the fit in the output directory.
    Analyze,
    /// Run simulate, estimate and analyze in one go.
    Run,
    /// Replicate the experiment and summarise the estimates.
    Montecarlo,
    /// Print the report for the bundle in the output directory.
    Report,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut config = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        config.simulation.seed = seed;
    }
    if let Some(reps) = c.reps {
        anyhow::ensure!(reps > 0, emplearn_cli::ConfigError("--reps must be at least 1".into()));
        config.n_reps = reps;
    }
    if let Some(jobs) = c.jobs {
        anyhow::ensure!(jobs > 0, emplearn_cli::ConfigError("--jobs must be at least 1".into()));
        config.jobs = jobs;
    }
    Ok(config)
}

fn montecarlo(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let summary = in_stage(Stage::Montecarlo, run_replications(config))?;
    for (r, e) in &summary.failures {
        eprintln!("replication {r} failed: {e}");
    }
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join("montecarlo.csv");
    std::fs::write(&path, summary_csv(config, &summary)).with_context(|| format!("cannot write {}", path.display()))?;
    println!("{}", path.display());
    if summary.n_failed == summary.n_reps {
        anyhow::bail!("all {} replications failed", summary.n_reps);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = in_stage(Stage::Config, load_config(&cli.common))?;
    let dir = &cli.common.out;
    let written = match cli.command {
        Command::Simulate => experiment::run_simulate(&config, dir)?,
        Command::Estimate => experiment::run_estimate(&config, dir)?,
        Command::Analyze => experiment::run_analyze(&config, dir)?,
        Command::Run => experiment::run_experiment(&config, dir)?,
        Command::Montecarlo => return montecarlo(&config, dir),
        Command::Report => {
            print!("{}", in_stage(Stage::Report, emit_report(dir))?);
            return Ok(());
        }
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
