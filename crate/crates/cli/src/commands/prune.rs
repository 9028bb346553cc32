use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use datadiet_core::cohort::CohortManifest;
use datadiet_core::diet::{prune_percentile, verify_diet_health_claim};

use crate::{diag, CmdStatus};

#[derive(Args)]
pub struct PruneArgs {
    /// Manifest with metrics attached (see `evaluate --out-manifest`)
    #[arg(long)]
    manifest: PathBuf,
    /// Percentile of easiest PSMA samples to exclude, 0 < n < 100
    #[arg(long)]
    percentile: f64,
    /// Directory for plan.json, excluded_ids.txt, retained_manifest.json
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn run(args: PruneArgs) -> anyhow::Result<CmdStatus> {
    let manifest = CohortManifest::load(&args.manifest)
        .with_context(|| format!("loading {}", args.manifest.display()))?;
    let plan = prune_percentile(&manifest, args.percentile)?;
    plan.write_files(&args.out_dir)
        .with_context(|| format!("writing plan files to {}", args.out_dir.display()))?;

    println!(
        "pruned {} of {} PSMA sample(s) at the {}th percentile (source digest {})",
        plan.excluded_count(),
        manifest.tracer_records(datadiet_core::Tracer::Psma).count(),
        args.percentile,
        &plan.source_manifest_hash[..12]
    );
    println!(
        "wrote plan.json, excluded_ids.txt, retained_manifest.json to {}",
        args.out_dir.display()
    );

    match verify_diet_health_claim(&plan, &manifest) {
        Ok(report) if report.claim_holds => {
            println!("health check: every excluded sample is sick");
        }
        Ok(report) => {
            println!(
                "health check: {} healthy sample(s) excluded: {}",
                report.healthy_excluded,
                report.healthy_ids.join(", ")
            );
        }
        Err(err) => diag::warn("-", format_args!("health check not possible: {err}")),
    }
    Ok(CmdStatus::Success)
}
