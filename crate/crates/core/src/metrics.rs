//! Per-sample segmentation measurements: Dice, soft-Dice + BCE loss, and
//! component-wise false-positive / false-negative volumes.
//!
//! FPV/FNV follow the challenge convention: a predicted component is false
//! positive only when it overlaps no ground-truth voxel, a ground-truth
//! component is false negative only when entirely missed, components under
//! 26-connectivity, volumes in milliliters.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::{component_overlap_stats, Connectivity};
use crate::error::{Error, Result};
use crate::grid::{check_same_dims, BinaryMask, VoxelData, VoxelGrid};

/// Numerical guard added inside the BCE logarithms.
pub const LOSS_EPSILON: f64 = 1e-7;
/// Default soft-Dice smoothing term.
pub const DEFAULT_SMOOTH: f64 = 1e-5;
/// Default probability threshold for mask conversion.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Identifier recorded in every report for the loss defined here.
pub const LOSS_FORMULA: &str = "soft_dice+bce";

/// Fixed chunk size for parallel reductions; partials are combined in chunk
/// order so results do not depend on the thread count.
const SUM_CHUNK: usize = 1 << 16;

/// The four per-sample measurements, plus the knobs they were produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sample_id: String,
    pub dice: f64,
    pub loss: f64,
    pub fpv_ml: f64,
    pub fnv_ml: f64,
    pub threshold: f64,
    pub loss_formula: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalParams {
    pub threshold: f64,
    pub smooth: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            threshold: DEFAULT_THRESHOLD,
            smooth: DEFAULT_SMOOTH,
        }
    }
}

/// Overlap score `2|P∩G| / (|P| + |G|)`; 1.0 when both masks are empty.
pub fn dice_score(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    check_same_dims(pred.dims(), gt.dims())?;
    let p = pred.values();
    let g = gt.values();
    let n_chunks = p.len().div_ceil(SUM_CHUNK).max(1);
    let (count_p, count_g, count_pg) = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * SUM_CHUNK;
            let hi = (lo + SUM_CHUNK).min(p.len());
            let mut cp = 0usize;
            let mut cg = 0usize;
            let mut cpg = 0usize;
            for i in lo..hi {
                cp += (p[i] != 0) as usize;
                cg += (g[i] != 0) as usize;
                cpg += (p[i] != 0 && g[i] != 0) as usize;
            }
            (cp, cg, cpg)
        })
        .reduce(
            || (0, 0, 0),
            |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2),
        );
    if count_p + count_g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * count_pg as f64 / (count_p + count_g) as f64)
}

/// Soft-Dice plus binary cross-entropy:
/// `L = 1 − (2·Σpg + smooth)/(Σp + Σg + smooth) − mean(g·ln(p+ε) + (1−g)·ln(1−p+ε))`
/// with the log arguments capped at 1 so a perfect prediction scores exactly 0.
pub fn dice_ce_loss(prob: &VoxelGrid, gt: &BinaryMask, smooth: f64) -> Result<f64> {
    if !smooth.is_finite() || smooth <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "smooth must be positive, got {smooth}"
        )));
    }
    check_same_dims(prob.dims(), gt.dims())?;
    let p = prob.as_scalar().ok_or(Error::KindMismatch {
        op: "dice_ce_loss",
        expected: "scalar",
    })?;
    if let Some(&bad) = p.par_iter().find_any(|&&v| !(0.0..=1.0).contains(&v)) {
        // find_any for speed, then the first offender for a stable message
        let first = p
            .iter()
            .find(|&&v| !(0.0..=1.0).contains(&v))
            .copied()
            .unwrap_or(bad);
        return Err(Error::OutOfRangeProbability(first as f64));
    }
    let g = gt.values();
    let n = p.len();

    let n_chunks = n.div_ceil(SUM_CHUNK).max(1);
    let partials: Vec<(f64, f64, f64, usize)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * SUM_CHUNK;
            let hi = (lo + SUM_CHUNK).min(n);
            let mut sum_p = 0.0f64;
            let mut sum_pg = 0.0f64;
            let mut bce = 0.0f64;
            let mut count_g = 0usize;
            for i in lo..hi {
                let pv = p[i] as f64;
                sum_p += pv;
                if g[i] != 0 {
                    count_g += 1;
                    sum_pg += pv;
                    bce -= (pv + LOSS_EPSILON).min(1.0).ln();
                } else {
                    bce -= (1.0 - pv + LOSS_EPSILON).min(1.0).ln();
                }
            }
            (sum_p, sum_pg, bce, count_g)
        })
        .collect();

    let mut sum_p = 0.0;
    let mut sum_pg = 0.0;
    let mut bce_total = 0.0;
    let mut sum_g = 0usize;
    for (a, b, c, d) in partials {
        sum_p += a;
        sum_pg += b;
        bce_total += c;
        sum_g += d;
    }

    let soft_dice = 1.0 - (2.0 * sum_pg + smooth) / (sum_p + sum_g as f64 + smooth);
    Ok(soft_dice + bce_total / n as f64)
}

fn voxel_volume_ml(spacing: [f64; 3]) -> f64 {
    spacing[0] * spacing[1] * spacing[2] / 1000.0
}

/// Total physical volume (mL) of predicted 26-connected components that
/// overlap no ground-truth voxel.
pub fn false_positive_volume(
    pred: &BinaryMask,
    gt: &BinaryMask,
    spacing: [f64; 3],
) -> Result<f64> {
    check_same_dims(pred.dims(), gt.dims())?;
    let stats = component_overlap_stats(pred, Connectivity::TwentySix, gt);
    let voxels: usize = stats
        .iter()
        .filter(|&&(_, overlap)| overlap == 0)
        .map(|&(size, _)| size)
        .sum();
    Ok(voxels as f64 * voxel_volume_ml(spacing))
}

/// Total physical volume (mL) of ground-truth components entirely missed by
/// the prediction; the role-swapped counterpart of [`false_positive_volume`].
pub fn false_negative_volume(
    pred: &BinaryMask,
    gt: &BinaryMask,
    spacing: [f64; 3],
) -> Result<f64> {
    false_positive_volume(gt, pred, spacing)
}

/// Binarize a probability volume: foreground where `p > threshold`.
pub fn threshold_mask(prob: &VoxelGrid, threshold: f64) -> Result<BinaryMask> {
    let p = prob.as_scalar().ok_or(Error::KindMismatch {
        op: "threshold_mask",
        expected: "scalar",
    })?;
    let data: Vec<i32> = p.iter().map(|&v| i32::from(v as f64 > threshold)).collect();
    let grid = VoxelGrid::new(
        prob.dims(),
        prob.spacing(),
        prob.origin(),
        prob.direction(),
        VoxelData::Label(data),
    )?;
    BinaryMask::from_grid(grid)
}

/// Threshold the probability volume and fill all four report fields.
pub fn evaluate_sample(
    sample_id: &str,
    prob: &VoxelGrid,
    gt: &BinaryMask,
    spacing: [f64; 3],
    params: &EvalParams,
) -> Result<MetricReport> {
    check_same_dims(prob.dims(), gt.dims())?;
    let loss = dice_ce_loss(prob, gt, params.smooth)?;
    let pred = threshold_mask(prob, params.threshold)?;
    let dice = dice_score(&pred, gt)?;
    let fpv_ml = false_positive_volume(&pred, gt, spacing)?;
    let fnv_ml = false_negative_volume(&pred, gt, spacing)?;
    Ok(MetricReport {
        sample_id: sample_id.to_string(),
        dice,
        loss,
        fpv_ml,
        fnv_ml,
        threshold: params.threshold,
        loss_formula: LOSS_FORMULA.to_string(),
    })
}

/// One JSON object per line, in input order.
pub fn write_reports_jsonl(reports: &[MetricReport], mut out: impl Write) -> Result<()> {
    for report in reports {
        serde_json::to_writer(&mut out, report)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_reports_jsonl(path: impl AsRef<Path>) -> Result<Vec<MetricReport>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(e, path))?;
    let reader = std::io::BufReader::new(file);
    let mut reports = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(e, path))?;
        if line.trim().is_empty() {
            continue;
        }
        reports.push(serde_json::from_str(&line)?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(dims: [usize; 3], foreground: &[usize]) -> BinaryMask {
        let mut data = vec![0; dims[0] * dims[1] * dims[2]];
        for &i in foreground {
            data[i] = 1;
        }
        BinaryMask::from_grid(VoxelGrid::label(dims, [1.0; 3], data).unwrap()).unwrap()
    }

    fn prob_grid(dims: [usize; 3], values: Vec<f32>) -> VoxelGrid {
        VoxelGrid::scalar(dims, [1.0; 3], values).unwrap()
    }

    #[test]
    fn dice_identity_disjoint_and_counted() {
        let dims = [3, 3, 3];
        let a = mask(dims, &[0, 1, 2]);
        assert_eq!(dice_score(&a, &a).unwrap(), 1.0);

        let b = mask(dims, &[10, 11]);
        assert_eq!(dice_score(&a, &b).unwrap(), 0.0);

        // |P| = 2, |G| = 4, overlap 2 → 2·2/(2+4), verified against a direct
        // set count over the enumerated fixture.
        let p = mask(dims, &[5, 6]);
        let g = mask(dims, &[5, 6, 7, 8]);
        let overlap = p
            .values()
            .iter()
            .zip(g.values())
            .filter(|(&a, &b)| a != 0 && b != 0)
            .count();
        assert_eq!(overlap, 2);
        let expected = 2.0 * overlap as f64
            / (p.foreground_count() + g.foreground_count()) as f64;
        assert!((dice_score(&p, &g).unwrap() - expected).abs() < 1e-15);
        assert!((dice_score(&p, &g).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dice_empty_vs_empty_is_one() {
        let dims = [2, 2, 2];
        let empty = mask(dims, &[]);
        assert_eq!(dice_score(&empty, &empty).unwrap(), 1.0);
        let other = mask(dims, &[0]);
        assert_eq!(dice_score(&empty, &other).unwrap(), 0.0);
    }

    #[test]
    fn dice_shape_mismatch() {
        let a = mask([2, 2, 2], &[]);
        let b = mask([2, 2, 1], &[]);
        assert!(matches!(
            dice_score(&a, &b),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn loss_perfect_prediction_is_tiny() {
        let dims = [2, 2, 2];
        let g = mask(dims, &[0, 3]);
        let p = prob_grid(
            dims,
            g.values().iter().map(|&v| v as f32).collect(),
        );
        let loss = dice_ce_loss(&p, &g, 1e-5).unwrap();
        assert!(loss >= 0.0);
        assert!(loss < 1e-5, "perfect loss {loss}");
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn loss_at_half_probability_matches_closed_form() {
        let dims = [2, 2, 2];
        let g = mask(dims, &[1, 2, 5]);
        let p = prob_grid(dims, vec![0.5; 8]);
        let smooth = 1e-5;
        let loss = dice_ce_loss(&p, &g, smooth).unwrap();
        // Closed form: BCE = −ln(0.5 + ε), frozen at 0.6931.
        let bce = -(0.5f64 + LOSS_EPSILON).ln();
        assert!((bce - 0.6931).abs() < 1e-4);
        let (sum_p, sum_g, sum_pg) = (4.0, 3.0, 1.5);
        let soft = 1.0 - (2.0 * sum_pg + smooth) / (sum_p + sum_g + smooth);
        assert!((loss - (soft + bce)).abs() < 1e-9);
    }

    #[test]
    fn loss_inverted_prediction_is_large() {
        let dims = [2, 2, 2];
        let g = mask(dims, &[0, 1, 2, 3]);
        let p = prob_grid(
            dims,
            g.values().iter().map(|&v| 1.0 - v as f32).collect(),
        );
        let loss = dice_ce_loss(&p, &g, 1e-5).unwrap();
        // soft-Dice term → 1, BCE → −ln(ε) ≈ 16.1
        let expected = (1.0 - 1e-5 / (8.0 + 1e-5)) - LOSS_EPSILON.ln();
        assert!((loss - expected).abs() < 1e-9);
        assert!(loss > 1.0);
    }

    #[test]
    fn loss_rejects_out_of_range_probabilities() {
        let dims = [1, 1, 2];
        let g = mask(dims, &[0]);
        let p = prob_grid(dims, vec![0.5, 1.5]);
        assert!(matches!(
            dice_ce_loss(&p, &g, 1e-5),
            Err(Error::OutOfRangeProbability(v)) if v == 1.5
        ));
    }

    #[test]
    fn fpv_counts_only_unmatched_components() {
        let dims = [10, 3, 1];
        // pred: run of 10 voxels in row y=0; gt empty.
        let pred = mask(dims, &(0..10).collect::<Vec<_>>());
        let gt = mask(dims, &[]);
        let spacing = [2.036, 2.036, 3.0];
        let fpv = false_positive_volume(&pred, &gt, spacing).unwrap();
        let expected = 10.0 * 2.036 * 2.036 * 3.0 / 1000.0;
        assert!((fpv - expected).abs() < 1e-12, "{fpv} vs {expected}");
        assert!((expected - 0.12436).abs() < 1e-4);

        // A single overlapping voxel exonerates the whole component.
        let gt_touch = mask(dims, &[4]);
        assert_eq!(
            false_positive_volume(&pred, &gt_touch, spacing).unwrap(),
            0.0
        );
        assert_eq!(false_positive_volume(&gt_touch, &gt_touch, spacing).unwrap(), 0.0);
    }

    #[test]
    fn fnv_sums_missed_gt_components() {
        let dims = [20, 1, 1];
        // gt components: 5 voxels at 0..5 and 7 voxels at 10..17.
        let gt = mask(dims, &(0..5).chain(10..17).collect::<Vec<_>>());
        let pred_first_only = mask(dims, &(0..5).collect::<Vec<_>>());
        let fnv = false_negative_volume(&pred_first_only, &gt, [1.0; 3]).unwrap();
        assert!((fnv - 0.007).abs() < 1e-12);

        let empty = mask(dims, &[]);
        let gt100 = {
            let dims = [100, 1, 1];
            mask(dims, &(0..100).collect::<Vec<_>>())
        };
        let empty100 = mask([100, 1, 1], &[]);
        assert!(
            (false_negative_volume(&empty100, &gt100, [1.0; 3]).unwrap() - 0.1).abs() < 1e-12
        );
        assert_eq!(false_negative_volume(&gt, &empty, [1.0; 3]).unwrap(), 0.0);

        // pred ⊇ gt → 0
        let all = mask(dims, &(0..20).collect::<Vec<_>>());
        assert_eq!(false_negative_volume(&all, &gt, [1.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn threshold_is_strictly_greater() {
        let p = prob_grid([4, 1, 1], vec![0.0, 0.5, 0.500001, 1.0]);
        let m = threshold_mask(&p, 0.5).unwrap();
        assert_eq!(m.values(), &[0, 0, 1, 1]);
    }

    #[test]
    fn evaluate_sample_composes_the_four_metrics() {
        let dims = [4, 4, 4];
        let gt = mask(dims, &[0, 1, 2, 21, 22]);
        let perfect = prob_grid(dims, gt.values().iter().map(|&v| v as f32).collect());
        let spacing = [1.0, 1.0, 1.0];
        let report =
            evaluate_sample("s", &perfect, &gt, spacing, &EvalParams::default()).unwrap();
        assert_eq!(report.dice, 1.0);
        assert_eq!(report.fpv_ml, 0.0);
        assert_eq!(report.fnv_ml, 0.0);
        assert!(report.loss < 1e-5);
        assert_eq!(report.loss_formula, LOSS_FORMULA);
        assert_eq!(report.threshold, 0.5);

        // All-zero prediction: dice 0, fpv 0, fnv = total gt volume.
        let zeros = prob_grid(dims, vec![0.0; 64]);
        let report = evaluate_sample("s", &zeros, &gt, spacing, &EvalParams::default()).unwrap();
        assert_eq!(report.dice, 0.0);
        assert_eq!(report.fpv_ml, 0.0);
        assert!((report.fnv_ml - 5.0 / 1000.0).abs() < 1e-12);

        // All-one prediction: fnv 0; the single predicted component touches
        // gt, so fpv 0 as well.
        let ones = prob_grid(dims, vec![1.0; 64]);
        let report = evaluate_sample("s", &ones, &gt, spacing, &EvalParams::default()).unwrap();
        assert_eq!(report.fnv_ml, 0.0);
        assert_eq!(report.fpv_ml, 0.0);
        assert!(report.loss > 1.0);
    }

    #[test]
    fn reports_roundtrip_jsonl() {
        let reports = vec![
            MetricReport {
                sample_id: "psma_aaaa_2020-01-01".into(),
                dice: 0.5,
                loss: 1.25,
                fpv_ml: 0.0,
                fnv_ml: 2.5,
                threshold: 0.5,
                loss_formula: LOSS_FORMULA.into(),
            },
            MetricReport {
                sample_id: "fdg_bbbb_2021-02-02".into(),
                dice: 1.0,
                loss: 0.0,
                fpv_ml: 0.1,
                fnv_ml: 0.0,
                threshold: 0.5,
                loss_formula: LOSS_FORMULA.into(),
            },
        ];
        let mut buf = Vec::new();
        write_reports_jsonl(&reports, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        for key in [
            "sample_id",
            "dice",
            "loss",
            "fpv_ml",
            "fnv_ml",
            "threshold",
            "loss_formula",
        ] {
            assert!(text.lines().next().unwrap().contains(key), "missing {key}");
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reports.jsonl");
        std::fs::write(&path, &buf).unwrap();
        assert_eq!(read_reports_jsonl(&path).unwrap(), reports);
    }
}
