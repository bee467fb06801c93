//! `langevin-mh`: runs the named experiments and writes CSV.
//!
//! ```text
//! langevin-mh converge --experiment fig3 --realizations 100000 --out fig3.csv
//! langevin-mh trajectory --config my.cfg --set h=0.25
//! ```
//!
//! Exit status: 0 on success, 2 on a configuration error, 3 when the
//! computation aborts (blow-up, discard budget exceeded).

mod commands;
mod config;
mod error;
mod presets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Command, Overrides};
use error::CliResult;

#[derive(Parser)]
#[command(name = "langevin-mh", version, about = "Metropolis-adjusted Langevin experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One realization of a reference path and the chosen methods on a shared Brownian path.
    Trajectory(Common),
    /// Strong-error study: RMS terminal error per step size and fitted order.
    Converge(Common),
    /// Long chain, histogram of retained states, and KS distance to the target.
    Ergodicity(Common),
    /// Mean rejection probability per step size and fitted order.
    RejectRate(Common),
}

#[derive(Args)]
struct Common {
    /// Named preset (fig1..fig5, zero, mala, malta, magla, ergodicity-*, reject-*).
    #[arg(long)]
    experiment: Option<String>,
    /// `key = value` file; `#` starts a comment.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Worker cap; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = config::parse_assignment)]
    set: Vec<(String, String)>,
}

fn execute(command: Command, c: Common) -> CliResult<()> {
    let overrides = Overrides {
        experiment: c.experiment,
        config: c.config,
        seed: c.seed,
        realizations: c.realizations,
        threads: c.threads,
        out: c.out,
        set: c.set,
    };
    let cfg = config::resolve(command, &overrides)?;
    let csv = commands::run(&cfg)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Trajectory(c) => (Command::Trajectory, c),
        Cmd::Converge(c) => (Command::Converge, c),
        Cmd::Ergodicity(c) => (Command::Ergodicity, c),
        Cmd::RejectRate(c) => (Command::RejectRate, c),
    };
    match execute(command, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("langevin-mh: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
