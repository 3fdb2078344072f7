//! `neurontrace` command-line interface.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 I/O, 4 degenerate result.

mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use neurontrace::Error;

#[derive(Parser)]
#[command(name = "neurontrace", version, about = "Neuron-level provenance for federated learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run federated training and write checkpoints to a run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Attribute global-model predictions of one round to its clients.
    Trace {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        round: usize,
        /// Test inputs: `3,7,12`, `label=K`, `all-correct` or `all-wrong`.
        #[arg(long)]
        inputs: String,
        /// Activation threshold.
        #[arg(long = "t", default_value_t = 0.0, allow_negative_numbers = true)]
        threshold: f64,
        /// Keep only the first K clients of each ranking.
        #[arg(long)]
        top_k: Option<usize>,
        /// Include per-neuron, per-client contributions.
        #[arg(long)]
        detail: bool,
        /// Report directory; defaults to `<run>/reports/round_NNNN`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an evaluation protocol end to end.
    Experiment {
        name: Experiment,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Aggregate saved reports.
    Report {
        #[command(subcommand)]
        kind: Report,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Forgetting,
    CrossSilo,
    FaultLocalization,
}

#[derive(Subcommand)]
enum Report {
    /// Label × client mean-share CSV from report files of one round.
    Heatmap {
        /// Glob matching report JSON files.
        #[arg(long)]
        reports: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Shape(_) | Error::Contract(_) => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::Degenerate(_) | Error::Numeric(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::init_threads().and_then(|()| match cli.command {
        Command::Train { config, out, force } => commands::train(&config, &out, force),
        Command::Trace { run, round, inputs, threshold, top_k, detail, out } => {
            let opts = neurontrace::provenance::TraceOptions { threshold, top_k, detail };
            commands::trace(&run, round, &inputs, &opts, out.as_deref())
        }
        Command::Experiment { name, config, out, force } => commands::experiment(name, &config, &out, force),
        Command::Report { kind: Report::Heatmap { reports, out } } => commands::heatmap(&reports, &out),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
