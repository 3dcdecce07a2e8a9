//! `qnet`: command-line front end for Jackson and Gordon–Newell network analysis.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid model, 3 unstable open
//! network, 4 malformed input, 5 statistical test not applicable or short of
//! samples, 6 state space over the guard limit.

mod analyze;
mod common;
mod normconst;
mod oracle;
mod output;
mod simulate;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Parser, Debug)]
#[command(
    name = "qnet",
    version,
    about = "Queueing network analysis: product forms, normalizing constants, simulation"
)]
struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Suppress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Traffic, stability, product form and performance metrics.
    Analyze(analyze::AnalyzeArgs),
    /// Compare normalizing-constant methods for a closed network.
    Normconst(normconst::NormconstArgs),
    /// Discrete-event simulation with optional statistical tests.
    Simulate(simulate::SimulateArgs),
    /// Check balance equations and the reversed process against a generator solve.
    Verify(verify::VerifyArgs),
}

pub struct Globals {
    pub format: Option<Format>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let globals = Globals { format: cli.format };
    let result = match &cli.command {
        Command::Analyze(a) => analyze::run(a, &globals),
        Command::Normconst(a) => normconst::run(a, &globals),
        Command::Simulate(a) => simulate::run(a, &globals),
        Command::Verify(a) => verify::run(a, &globals),
    };
    let (text, code) = match result {
        Ok(text) => (Some(text), 0),
        Err(failure) => {
            if !cli.quiet {
                eprintln!("qnet: {failure}");
            }
            (failure.report, failure.code)
        }
    };
    if let Some(text) = text {
        if let Err(e) = output::emit(cli.output.as_deref(), &text) {
            if !cli.quiet {
                eprintln!("qnet: cannot write output: {e}");
            }
            return ExitCode::from(common::exit::OTHER as u8);
        }
    }
    ExitCode::from(code as u8)
}
