//! `bcycles`: exact and asymptotic experiments on Ewens permutations with
//! bounded cycle lengths.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 model outside the regime a command requires.

mod artifact;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use bounded_cycles::{Error, Result};
use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Format, ModelArgs, RunArgs};

#[derive(Parser, Debug)]
#[command(name = "bcycles", version, about)]
struct Cli {
    /// JSON experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, written atomically. Defaults to stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Output format for per-model reports.
    #[arg(long, value_enum, global = true)]
    format: Option<Format>,
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true, env = "BCYCLES_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Saddle point, lambda values and regime classification per model.
    Saddle(Common),
    /// Exact partition function Z_{n,alpha}.
    Partition(Common),
    /// Exact samples as CSV: cycle types, longest cycles or process values.
    Sample(Common),
    /// Exact total variation distance of the first b counts to Poisson.
    Tvd(Common),
    /// Limit-law checks: longest cycles, counting process, spacings, tightness, CLT.
    Limits(Common),
    /// Central limit checks for the counts C_m.
    Clt(Common),
    /// Brute-force law of the cycle type for small n.
    Oracle(Common),
    /// Saddle-point coefficient against the exact value.
    Spcheck(Common),
}

type Action = fn(&ExperimentConfig) -> Result<String>;

fn run(cli: Cli) -> Result<()> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start workers: {e}")))?;
    }
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let (name, common, action): (&str, Common, Action) = match cli.command {
        Command::Saddle(c) => ("saddle", c, commands::saddle),
        Command::Partition(c) => ("partition", c, commands::partition),
        Command::Sample(c) => ("sample", c, commands::sample),
        Command::Tvd(c) => ("tvd", c, commands::tvd),
        Command::Limits(c) => ("limits", c, commands::limits),
        Command::Clt(c) => ("clt", c, commands::clt),
        Command::Oracle(c) => ("oracle", c, commands::oracle),
        Command::Spcheck(c) => ("spcheck", c, commands::spcheck),
    };
    config.overlay(common.model, common.run);
    if cli.format.is_some() {
        config.format = cli.format;
    }
    if cli.out.is_some() {
        config.output = cli.out;
    }
    let text = action(&config).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{name}: {msg}")),
        other => other,
    })?;
    artifact::write(config.output.as_deref(), &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bcycles: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
