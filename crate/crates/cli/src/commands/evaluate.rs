use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;

use datadiet_core::cohort::{CohortManifest, SampleRecord};
use datadiet_core::grid::BinaryMask;
use datadiet_core::metrics::{evaluate_sample, write_reports_jsonl, EvalParams, MetricReport};
use datadiet_core::nifti;

use crate::{diag, CmdStatus};

#[derive(Args)]
pub struct EvaluateArgs {
    /// Manifest listing the samples to score
    #[arg(long)]
    manifest: PathBuf,
    /// Directory searched for <id>_pred.nii[.gz] when a record carries no
    /// prediction path
    #[arg(long)]
    pred_dir: Option<PathBuf>,
    /// Output JSON-lines file, one MetricReport per evaluated sample
    #[arg(long)]
    out: PathBuf,
    /// Also write a copy of the manifest with the metrics attached
    #[arg(long)]
    out_manifest: Option<PathBuf>,
    /// Probability threshold for mask conversion
    #[arg(long, default_value_t = datadiet_core::metrics::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Soft-Dice smoothing term
    #[arg(long, default_value_t = datadiet_core::metrics::DEFAULT_SMOOTH)]
    smooth: f64,
}

fn prediction_path(record: &SampleRecord, pred_dir: Option<&Path>) -> Option<PathBuf> {
    if let Some(path) = &record.pred_path {
        if path.exists() {
            return Some(path.clone());
        }
    }
    let dir = pred_dir?;
    for extension in ["nii.gz", "nii"] {
        let candidate = dir.join(format!("{}_pred.{extension}", record.sample_id));
        if candidate.exists() {
            return Some(candidate);
        }
    }
    None
}

fn evaluate_record(
    record: &SampleRecord,
    pred_dir: Option<&Path>,
    params: &EvalParams,
) -> Result<MetricReport, String> {
    let label_path = record
        .label_path
        .as_ref()
        .ok_or_else(|| "no label volume in manifest".to_string())?;
    let pred_path = prediction_path(record, pred_dir)
        .ok_or_else(|| "missing prediction volume".to_string())?;
    let prob = nifti::load_nifti(&pred_path)
        .map_err(|e| format!("prediction: {e}"))?
        .to_scalar();
    let label = nifti::load_nifti(label_path).map_err(|e| format!("label: {e}"))?;
    let gt = BinaryMask::binarize(&label).map_err(|e| format!("label: {e}"))?;
    let spacing = gt.spacing();
    evaluate_sample(&record.sample_id, &prob, &gt, spacing, params).map_err(|e| e.to_string())
}

pub fn run(args: EvaluateArgs) -> anyhow::Result<CmdStatus> {
    let mut manifest = CohortManifest::load(&args.manifest)
        .with_context(|| format!("loading {}", args.manifest.display()))?;
    let params = EvalParams {
        threshold: args.threshold,
        smooth: args.smooth,
    };

    // Parallel across samples; the JSONL stays in manifest order.
    let results: Vec<Result<MetricReport, String>> = manifest
        .samples()
        .par_iter()
        .map(|record| evaluate_record(record, args.pred_dir.as_deref(), &params))
        .collect();

    let mut reports = Vec::new();
    let mut skipped = 0usize;
    for (record, result) in manifest.samples().iter().zip(results) {
        match result {
            Ok(report) => reports.push(report),
            Err(message) => {
                skipped += 1;
                diag::warn(&record.sample_id, format_args!("skipped: {message}"));
            }
        }
    }

    let file = std::fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_reports_jsonl(&reports, std::io::BufWriter::new(file))?;

    if let Some(out_manifest) = &args.out_manifest {
        manifest.attach_metrics(&reports);
        manifest.save(out_manifest)?;
    }

    println!(
        "evaluated {}/{} sample(s) → {}",
        reports.len(),
        manifest.len(),
        args.out.display()
    );
    Ok(if skipped == 0 {
        CmdStatus::Success
    } else {
        CmdStatus::Partial
    })
}
