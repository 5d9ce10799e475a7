use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod error;
mod run;

/// Vacuum correlation moments of a momentum-kick reservoir model, computed by
/// independent routes (closed shell formula, recursive momentum functions,
/// symbolic noise reduction) plus finite-coupling quadrature.
#[derive(Parser)]
#[command(name = "ifock", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration (schema 1)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Creation pattern, e.g. "1,0" or "1,1,0,0"; overrides the config
    #[arg(long)]
    epsilon: Option<String>,
    /// CSV destination; overrides the config, defaults to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a word: triviality, its non-crossing pairing, pairing count
    Partition(CommonArgs),
    /// Scaling-limit moments over the probe grid, one CSV row per route
    Moment(CommonArgs),
    /// Frequency-shell Wick sum for the quasi-free comparison state
    BoseMoment(CommonArgs),
    /// Finite-coupling moments, decomposed per pairing, one block per lambda
    Prelimit(CommonArgs),
    /// Run all three limit routes and compare; nonzero exit above 1e-4
    Crosscheck(CommonArgs),
    /// Two-point kernel over the probe grid, tangent shells flagged
    KernelScan(CommonArgs),
}

fn dispatch(cmd: Command) -> Result<(), error::CliError> {
    let lift = |a: CommonArgs| run::CommonArgs { config: a.config, epsilon: a.epsilon, out: a.out };
    match cmd {
        Command::Partition(a) => run::partition(&lift(a)),
        Command::Moment(a) => run::moment(&lift(a)),
        Command::BoseMoment(a) => run::bose_moment_cmd(&lift(a)),
        Command::Prelimit(a) => run::prelimit(&lift(a)),
        Command::Crosscheck(a) => run::crosscheck(&lift(a)),
        Command::KernelScan(a) => run::kernel_scan(&lift(a)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
