//! datadiet: curation toolkit for PET/CT lesion-segmentation datasets.
//!
//! Exit codes: 0 full success, 2 partial success (some samples skipped,
//! details on stderr), 1 fatal error. Diagnostics go to stderr as
//! tab-separated `LEVEL<TAB>sample_id<TAB>message` lines.

mod commands;
mod diag;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Outcome of a subcommand that can partially succeed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmdStatus {
    Success,
    Partial,
}

impl CmdStatus {
    fn exit_code(self) -> ExitCode {
        match self {
            CmdStatus::Success => ExitCode::SUCCESS,
            CmdStatus::Partial => ExitCode::from(2),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "datadiet",
    version,
    about = "Data-centric curation for PET/CT lesion-segmentation datasets",
    long_about = "Scan a dataset into a manifest, preprocess volumes, score every sample \
                  against a fixed model's predictions, inspect cohort balance, prune the \
                  easiest PSMA samples by loss percentile, and compare metric distributions \
                  before and after the diet."
)]
struct Cli {
    /// Worker threads (default: DATADIET_THREADS env var, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discover volumes under a directory and write a cohort manifest
    Scan(commands::scan::ScanArgs),
    /// Reorient, resample, and normalize the volumes of a manifest
    Preprocess(commands::preprocess::PreprocessArgs),
    /// Compute per-sample metrics against prediction volumes
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Print cohort totals, tracer split, and sick rates
    Stats(commands::stats::StatsArgs),
    /// Rank PSMA samples by loss and prune the easiest percentile
    Prune(commands::prune::PruneArgs),
    /// QQ-compare a metric distribution before vs after a diet
    Qq(commands::qq::QqArgs),
    /// Generate a synthetic cohort with known ground truth
    Synth(commands::synth::SynthArgs),
}

fn configure_threads(flag: Option<usize>) {
    let from_env = || {
        std::env::var("DATADIET_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0)
    };
    if let Some(threads) = flag.filter(|&n| n > 0).or_else(from_env) {
        // Errors only if a global pool already exists, which is fine.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    let result = match cli.command {
        Command::Scan(args) => commands::scan::run(args),
        Command::Preprocess(args) => commands::preprocess::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Stats(args) => commands::stats::run(args),
        Command::Prune(args) => commands::prune::run(args),
        Command::Qq(args) => commands::qq::run(args),
        Command::Synth(args) => commands::synth::run(args),
    };
    match result {
        Ok(status) => status.exit_code(),
        Err(err) => {
            diag::error("-", format_args!("{err:#}"));
            ExitCode::FAILURE
        }
    }
}
