use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pxlap_core::config::load_config;
use pxlap_core::run::{run, Command, RunStatus};

#[derive(Parser)]
#[command(name = "pxlap", version, about = "Singular p(x)-Laplacian solver and estimate harness")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Path to the run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `report.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized test fields; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the approximate problems and write solution snapshots.
    Solve(RunArgs),
    /// Solve and evaluate the estimate suite.
    Verify(RunArgs),
    /// Verify every constant-exponent triple of the `[sweep]` section.
    Sweep(RunArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(RunStatus::UsageError.code() as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (command, args) = match cli.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
    };
    let mut cfg = match load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(RunStatus::UsageError.code() as u8);
        }
    };
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    let outcome = run(command, &cfg);
    for e in &outcome.errors {
        eprintln!("error: {e}");
    }
    eprintln!("status: {:?} (reports in {})", outcome.status, cfg.out_dir.display());
    ExitCode::from(outcome.status.code() as u8)
}
