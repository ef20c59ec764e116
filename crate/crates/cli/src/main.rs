use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bci_cli::{execute, CommandKind, Invocation};

/// Backtesting CLI for online prediction-interval calibration.
#[derive(Parser)]
#[command(name = "bci", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one controller over a series and write metrics + summary CSVs
    Run(CommonArgs),
    /// Variance-match the BCI stepsize against an ACI reference run
    Match(CommonArgs),
    /// Expected calibration curve of the forecaster's raw PITs
    Ecc(CommonArgs),
    /// Write a synthetic GARCH or AR series
    Synth(CommonArgs),
    /// Fit the configured forecaster and print its parameters
    Fit(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the `key = value` config file
    #[arg(long)]
    config: PathBuf,

    /// Output directory (created if missing)
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,

    /// Suppress progress output
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Run(a) => (CommandKind::Run, a),
        Command::Match(a) => (CommandKind::Match, a),
        Command::Ecc(a) => (CommandKind::Ecc, a),
        Command::Synth(a) => (CommandKind::Synth, a),
        Command::Fit(a) => (CommandKind::Fit, a),
    };
    let invocation = Invocation {
        command: kind,
        config: args.config,
        out: args.out,
        seed: args.seed,
        quiet: args.quiet,
    };
    match execute(&invocation) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            for line in err.lines() {
                eprintln!("{line}");
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
