//! `ctrnn`: drive the model transforms and the verification suite from a
//! TOML experiment config.
//!
//! Exit status: 0 on success or a passing suite, 1 on any hard error, 2 when
//! the verification suite runs but fails.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Ctx, Outcome};

#[derive(Debug, Parser)]
#[command(name = "ctrnn", version, about = "Continuous-time RNN transforms, simulation and verification")]
struct Cli {
    /// Experiment config (TOML). Optional for `verify`.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for ensembles and the suite; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply the configured transform sequence and describe the result.
    Transform,
    /// Simulate the transformed model and write the trajectory.
    Simulate,
    /// Equilibrium of the transformed model and its local stability.
    Analyze,
    /// Run the verification suite.
    Verify,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if cli.config.is_none() && !matches!(cli.command, Command::Verify) {
        anyhow::bail!("--config is required for this command");
    }
    let mut loaded = config::load(cli.config.as_deref())?;
    let cfg = &mut loaded.config;
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(s) = cfg.seed {
        cfg.verify.seed = s;
    }
    if let Some(dir) = cli.out {
        cfg.output.dir = dir;
    }
    commands::ensure_valid(cfg)?;
    let seed = cfg.seed.unwrap_or(ctrnn::verify::EnsembleSpec::default().seed);
    let ctx = Ctx { loaded, seed, quiet: cli.quiet };
    match cli.command {
        Command::Transform => commands::transform(&ctx),
        Command::Simulate => commands::simulate_cmd(&ctx),
        Command::Analyze => commands::analyze(&ctx),
        Command::Verify => commands::verify(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::SuiteFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
