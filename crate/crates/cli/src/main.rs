//! `rsem`: synthesize features, train and evaluate random subspace
//! ensembles, check gradients and benchmark subspace construction.

mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Flags;

#[derive(Parser)]
#[command(name = "rsem", version, about = "Few-shot classification with random subspace ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic Gaussian feature file.
    Synth(Flags),
    /// Train an ensemble episodically and save the checkpoint.
    Train(Flags),
    /// Evaluate a checkpoint on the test classes.
    Eval(Flags),
    /// Time random-subspace construction against truncated SVD.
    Bench(Flags),
    /// Compare analytic and finite-difference gradients on a tiny model.
    Gradcheck(Flags),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Data(m) => write!(f, "data error: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<rsem::Error> for CliError {
    fn from(e: rsem::Error) -> Self {
        use rsem::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) | E::Split(_) | E::Rank { .. } => Self::Usage(msg),
            E::Shape(_) | E::Ingestion { .. } | E::Sampling { .. } | E::Format(_) | E::Io(_) => {
                Self::Data(msg)
            }
            E::Degenerate(_) | E::Evaluation(_) | E::NonFiniteLoss { .. } => Self::Numerical(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Synth(f) => commands::synth(f),
        Command::Train(f) => commands::train(f),
        Command::Eval(f) => commands::eval(f),
        Command::Bench(f) => commands::bench(f),
        Command::Gradcheck(f) => commands::gradcheck(f),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rsem: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
