//! Quantile machinery and QQ comparison of metric distributions in log space.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cohort::{CohortManifest, Tracer};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;

/// Quantile levels used for a "log-percentiles" comparison: q = 0.01 … 0.99.
pub const DEFAULT_QQ_POINTS: usize = 99;
/// Floor applied before taking logs; below one voxel volume at challenge
/// spacing, so only exact zeros are affected.
pub const DEFAULT_QQ_EPSILON: f64 = 1e-4;

/// An empirical distribution, stored sorted for quantile queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    sorted_values: Vec<f64>,
    units: String,
}

impl DistributionSummary {
    pub fn new(mut values: Vec<f64>, units: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "distribution contains non-finite value {bad}"
            )));
        }
        values.sort_by(f64::total_cmp);
        Ok(DistributionSummary {
            sorted_values: values,
            units: units.into(),
        })
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted_values
    }

    pub fn count(&self) -> usize {
        self.sorted_values.len()
    }

    pub fn units(&self) -> &str {
        &self.units
    }

    pub fn min(&self) -> f64 {
        self.sorted_values[0]
    }

    pub fn max(&self) -> f64 {
        *self.sorted_values.last().expect("nonempty by construction")
    }

    pub fn mean(&self) -> f64 {
        self.sorted_values.iter().sum::<f64>() / self.count() as f64
    }

    pub fn median(&self) -> f64 {
        quantile(self, 0.5)
    }
}

/// Linear-interpolation quantile (the common "type 7" estimator):
/// `h = q·(n−1)`, interpolate between the surrounding order statistics.
/// `q` is clamped to `[0, 1]`.
pub fn quantile(dist: &DistributionSummary, q: f64) -> f64 {
    let values = &dist.sorted_values;
    let q = q.clamp(0.0, 1.0);
    let h = q * (values.len() - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 {
        values[lo]
    } else {
        values[lo] + frac * (values[lo + 1] - values[lo])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QQPoint {
    pub quantile: f64,
    pub log_before: f64,
    pub log_after: f64,
}

/// Paired log-quantiles of two distributions at common levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QQSeries {
    pub points: Vec<QQPoint>,
    /// Values are floored at this before the log.
    pub epsilon_clamp: f64,
}

/// Compare two distributions at `num_points` interior quantile levels
/// `q_i = i/(num_points+1)`. Values are clamped at `eps` before the log so
/// exact zeros stay finite.
pub fn log_percentile_qq(
    pre: &DistributionSummary,
    post: &DistributionSummary,
    num_points: usize,
    eps: f64,
) -> Result<QQSeries> {
    if num_points < 2 {
        return Err(Error::InvalidArgument(format!(
            "num_points must be at least 2, got {num_points}"
        )));
    }
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let points = (1..=num_points)
        .map(|i| {
            let q = i as f64 / (num_points + 1) as f64;
            QQPoint {
                quantile: q,
                log_before: quantile(pre, q).max(eps).ln(),
                log_after: quantile(post, q).max(eps).ln(),
            }
        })
        .collect();
    Ok(QQSeries {
        points,
        epsilon_clamp: eps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TracerFilter {
    Fdg,
    Psma,
    All,
}

impl TracerFilter {
    pub fn matches(self, tracer: Tracer) -> bool {
        match self {
            TracerFilter::Fdg => tracer == Tracer::Fdg,
            TracerFilter::Psma => tracer == Tracer::Psma,
            TracerFilter::All => true,
        }
    }
}

impl std::str::FromStr for TracerFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fdg" => Ok(TracerFilter::Fdg),
            "psma" => Ok(TracerFilter::Psma),
            "all" => Ok(TracerFilter::All),
            other => Err(Error::InvalidArgument(format!(
                "tracer filter must be fdg, psma, or all, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for TracerFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TracerFilter::Fdg => write!(f, "fdg"),
            TracerFilter::Psma => write!(f, "psma"),
            TracerFilter::All => write!(f, "all"),
        }
    }
}

/// Which `MetricReport` field a comparison reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricField {
    Dice,
    Loss,
    FpvMl,
    FnvMl,
}

impl MetricField {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricField::Dice => "dice",
            MetricField::Loss => "loss",
            MetricField::FpvMl => "fpv_ml",
            MetricField::FnvMl => "fnv_ml",
        }
    }

    pub fn units(self) -> &'static str {
        match self {
            MetricField::FpvMl | MetricField::FnvMl => "mL",
            MetricField::Dice | MetricField::Loss => "",
        }
    }

    pub fn extract(self, report: &MetricReport) -> f64 {
        match self {
            MetricField::Dice => report.dice,
            MetricField::Loss => report.loss,
            MetricField::FpvMl => report.fpv_ml,
            MetricField::FnvMl => report.fnv_ml,
        }
    }
}

impl std::str::FromStr for MetricField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dice" => Ok(MetricField::Dice),
            "loss" => Ok(MetricField::Loss),
            "fpv_ml" | "fpv" => Ok(MetricField::FpvMl),
            "fnv_ml" | "fnv" => Ok(MetricField::FnvMl),
            other => Err(Error::InvalidArgument(format!(
                "metric must be one of dice, loss, fpv_ml, fnv_ml, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub qq: QQSeries,
    pub metric: String,
    pub tracer_filter: String,
    pub before_count: usize,
    pub after_count: usize,
    /// after − before
    pub mean_delta: f64,
    /// after − before
    pub median_delta: f64,
}

/// Metric values for the records passing the tracer filter; errors when a
/// passing record lacks metrics.
pub fn manifest_metric_values(
    manifest: &CohortManifest,
    field: MetricField,
    filter: TracerFilter,
) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for record in manifest.samples() {
        if !filter.matches(record.tracer) {
            continue;
        }
        match &record.metrics {
            Some(report) => values.push(field.extract(report)),
            None => missing.push(record.sample_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingMetrics(missing.len(), missing));
    }
    if values.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no records match tracer filter {filter}"
        )));
    }
    Ok(values)
}

/// QQ comparison of one metric between two manifests, plus summary deltas.
pub fn compare_cohort_metric(
    before: &CohortManifest,
    after: &CohortManifest,
    field: MetricField,
    filter: TracerFilter,
) -> Result<ComparisonReport> {
    let before_values = manifest_metric_values(before, field, filter)?;
    let after_values = manifest_metric_values(after, field, filter)?;
    compare_values(
        before_values,
        after_values,
        field,
        filter,
        DEFAULT_QQ_POINTS,
        DEFAULT_QQ_EPSILON,
    )
}

/// Same comparison from raw report streams; tracer comes from the id prefix.
pub fn compare_report_metric(
    before: &[MetricReport],
    after: &[MetricReport],
    field: MetricField,
    filter: TracerFilter,
) -> Result<ComparisonReport> {
    compare_report_metric_with(
        before,
        after,
        field,
        filter,
        DEFAULT_QQ_POINTS,
        DEFAULT_QQ_EPSILON,
    )
}

/// Report-stream comparison with explicit quantile count and epsilon clamp.
pub fn compare_report_metric_with(
    before: &[MetricReport],
    after: &[MetricReport],
    field: MetricField,
    filter: TracerFilter,
    num_points: usize,
    eps: f64,
) -> Result<ComparisonReport> {
    let before_values = report_metric_values(before, field, filter)?;
    let after_values = report_metric_values(after, field, filter)?;
    compare_values(before_values, after_values, field, filter, num_points, eps)
}

fn report_metric_values(
    reports: &[MetricReport],
    field: MetricField,
    filter: TracerFilter,
) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for report in reports {
        let tracer = Tracer::from_id_prefix(&report.sample_id)?;
        if filter.matches(tracer) {
            values.push(field.extract(report));
        }
    }
    if values.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no reports match tracer filter {filter}"
        )));
    }
    Ok(values)
}

fn compare_values(
    before_values: Vec<f64>,
    after_values: Vec<f64>,
    field: MetricField,
    filter: TracerFilter,
    num_points: usize,
    eps: f64,
) -> Result<ComparisonReport> {
    let before = DistributionSummary::new(before_values, field.units())?;
    let after = DistributionSummary::new(after_values, field.units())?;
    let qq = log_percentile_qq(&before, &after, num_points, eps)?;
    Ok(ComparisonReport {
        qq,
        metric: field.as_str().to_string(),
        tracer_filter: filter.to_string(),
        before_count: before.count(),
        after_count: after.count(),
        mean_delta: after.mean() - before.mean(),
        median_delta: after.median() - before.median(),
    })
}

/// CSV with the exact columns `quantile,log_before,log_after`.
pub fn write_qq_csv(series: &QQSeries, mut out: impl Write) -> Result<()> {
    writeln!(out, "quantile,log_before,log_after")?;
    for p in &series.points {
        writeln!(out, "{},{},{}", p.quantile, p.log_before, p.log_after)?;
    }
    Ok(())
}

/// Self-contained SVG scatter of the series with a dashed identity line.
pub fn qq_svg(series: &QQSeries, title: &str) -> String {
    const SIZE: f64 = 640.0;
    const MARGIN: f64 = 60.0;
    let span = SIZE - 2.0 * MARGIN;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in &series.points {
        lo = lo.min(p.log_before).min(p.log_after);
        hi = hi.max(p.log_before).max(p.log_after);
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let scale = span / (hi - lo);
    let to_x = |v: f64| MARGIN + (v - lo) * scale;
    let to_y = |v: f64| SIZE - MARGIN - (v - lo) * scale;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{span}\" height=\"{span}\" fill=\"white\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        SIZE / 2.0,
        MARGIN / 2.0,
        xml_escape(title)
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">log quantile (before)</text>\n",
        SIZE / 2.0,
        SIZE - MARGIN / 3.0
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 {} {})\">log quantile (after)</text>\n",
        MARGIN / 3.0,
        SIZE / 2.0,
        MARGIN / 3.0,
        SIZE / 2.0
    ));
    // Identity reference: equal distributions fall on this dashed line.
    svg.push_str(&format!(
        "  <line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"red\" stroke-dasharray=\"6 4\"/>\n",
        to_x(lo + pad),
        to_y(lo + pad),
        to_x(hi - pad),
        to_y(hi - pad)
    ));
    for p in &series.points {
        svg.push_str(&format!(
            "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.7\"/>\n",
            to_x(p.log_before),
            to_y(p.log_after)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
