use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use datadiet_core::cohort::scan_dataset;

use crate::{diag, CmdStatus};

#[derive(Args)]
pub struct ScanArgs {
    /// Dataset root to walk for <id>_<role>.nii[.gz] volumes
    #[arg(long)]
    root: PathBuf,
    /// Output manifest path
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: ScanArgs) -> anyhow::Result<CmdStatus> {
    let outcome = scan_dataset(&args.root)
        .with_context(|| format!("scanning {}", args.root.display()))?;
    outcome
        .manifest
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;

    for issue in &outcome.issues {
        diag::warn("-", format_args!("{}: {}", issue.path.display(), issue.message));
    }
    println!(
        "scanned {} samples into {} ({} issue(s))",
        outcome.manifest.len(),
        args.out.display(),
        outcome.issues.len()
    );
    Ok(if outcome.issues.is_empty() {
        CmdStatus::Success
    } else {
        CmdStatus::Partial
    })
}
