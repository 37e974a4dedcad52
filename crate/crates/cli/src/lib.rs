//! Command-line runner: synthetic data, training, the SPAM baseline, theory
//! checks and shape export, each writing reproducible artifacts to a directory.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use snam_core::SnamError;

use crate::config::{RunArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "snam", version, about = "Sparse neural additive models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic benchmark as CSV plus a truth sidecar.
    Synth(RunArgs),
    /// Train a model, evaluate it on the held-out split and write a report.
    Train(RunArgs),
    /// Fit the SPAM backfitting baseline.
    Spam(RunArgs),
    /// Incoherence, support threshold and slow-rate bound of a random-feature checkpoint.
    Theory {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Per-feature fitted shape functions as CSV.
    ExportShapes {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Process exit status for a failed run: 2 for numerical failures, 1 otherwise.
pub fn exit_code(err: &SnamError) -> u8 {
    if err.is_numerical() {
        2
    } else {
        1
    }
}

/// Runs one command and returns what it prints on success.
pub fn run(cli: &Cli) -> Result<String, SnamError> {
    match &cli.command {
        Command::Synth(args) => commands::cmd_synth(&RunConfig::from_args(args)?),
        Command::Train(args) => {
            let outcome = commands::cmd_train(&RunConfig::from_args(args)?)?;
            Ok(format!(
                "{}report: {}",
                commands::render_report(&outcome.report),
                outcome.report_path.display()
            ))
        }
        Command::Spam(args) => {
            let outcome = commands::cmd_spam(&RunConfig::from_args(args)?)?;
            Ok(format!(
                "{}report: {}",
                commands::render_report(&outcome.report),
                outcome.report_path.display()
            ))
        }
        Command::Theory { checkpoint, run } => {
            let r = commands::cmd_theory(&RunConfig::from_args(run)?, checkpoint)?;
            Ok(serde_json::to_string_pretty(&r)?)
        }
        Command::ExportShapes { checkpoint, run } => {
            let path = commands::cmd_export_shapes(&RunConfig::from_args(run)?, checkpoint)?;
            Ok(format!("wrote {}", path.display()))
        }
    }
}
