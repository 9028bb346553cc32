use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use datadiet_core::distcompare::{
    compare_report_metric_with, qq_svg, write_qq_csv, MetricField, TracerFilter,
    DEFAULT_QQ_EPSILON, DEFAULT_QQ_POINTS,
};
use datadiet_core::metrics::read_reports_jsonl;

use crate::CmdStatus;

#[derive(Args)]
pub struct QqArgs {
    /// Pre-diet metric reports (JSON lines)
    #[arg(long)]
    before: PathBuf,
    /// Post-diet metric reports (JSON lines)
    #[arg(long)]
    after: PathBuf,
    /// dice | loss | fpv_ml | fnv_ml
    #[arg(long, default_value = "fpv_ml")]
    metric: String,
    /// fdg | psma | all
    #[arg(long, default_value = "psma")]
    tracer: String,
    /// Output CSV (columns: quantile,log_before,log_after)
    #[arg(long)]
    out: PathBuf,
    /// Optional self-contained SVG plot with the identity reference line
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Number of quantile levels
    #[arg(long, default_value_t = DEFAULT_QQ_POINTS)]
    points: usize,
    /// Floor applied before taking logs
    #[arg(long, default_value_t = DEFAULT_QQ_EPSILON)]
    eps: f64,
}

pub fn run(args: QqArgs) -> anyhow::Result<CmdStatus> {
    let field: MetricField = args.metric.parse()?;
    let filter: TracerFilter = args.tracer.parse()?;
    let before = read_reports_jsonl(&args.before)
        .with_context(|| format!("reading {}", args.before.display()))?;
    let after = read_reports_jsonl(&args.after)
        .with_context(|| format!("reading {}", args.after.display()))?;

    let comparison =
        compare_report_metric_with(&before, &after, field, filter, args.points, args.eps)?;

    let file = std::fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_qq_csv(&comparison.qq, std::io::BufWriter::new(file))?;

    if let Some(svg_path) = &args.svg {
        let title = format!("{} ({}) pre vs post diet", field.as_str(), filter);
        std::fs::write(svg_path, qq_svg(&comparison.qq, &title))
            .with_context(|| format!("writing {}", svg_path.display()))?;
    }

    println!(
        "{} ({}): {} before vs {} after, mean Δ {:+.6}, median Δ {:+.6} → {}",
        field.as_str(),
        filter,
        comparison.before_count,
        comparison.after_count,
        comparison.mean_delta,
        comparison.median_delta,
        args.out.display()
    );
    Ok(CmdStatus::Success)
}
