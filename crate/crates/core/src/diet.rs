//! Loss-ranked percentile pruning of PSMA samples.
//!
//! The easiest samples — those the fixed baseline fits with the lowest loss —
//! are removed before retraining: PSMA records are ordered by loss ascending
//! and the first `ceil(n/100 · #PSMA)` are excluded. FDG records are always
//! kept.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{CohortManifest, Tracer};
use crate::error::{Error, Result};

/// A percentile-pruning decision, everything a retraining run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DietPlan {
    pub percentile_n: f64,
    pub ranking_metric: String,
    /// Lexicographically sorted ids of the pruned PSMA samples.
    pub excluded_ids: Vec<String>,
    /// SHA-256 of the manifest the plan was derived from, so retraining can
    /// verify it consumes exactly the intended dataset.
    pub source_manifest_hash: String,
    pub retained_manifest: CohortManifest,
}

impl DietPlan {
    pub fn excluded_count(&self) -> usize {
        self.excluded_ids.len()
    }

    /// One id per line, the appendix list format.
    pub fn excluded_ids_text(&self) -> String {
        let mut text = self.excluded_ids.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        text
    }

    /// Write `plan.json`, `excluded_ids.txt`, and `retained_manifest.json`
    /// into `dir`.
    pub fn write_files(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(e, dir))?;
        let plan_path = dir.join("plan.json");
        let mut plan_json = serde_json::to_string_pretty(self)?;
        plan_json.push('\n');
        std::fs::write(&plan_path, plan_json).map_err(|e| Error::io(e, &plan_path))?;
        let ids_path = dir.join("excluded_ids.txt");
        std::fs::write(&ids_path, self.excluded_ids_text())
            .map_err(|e| Error::io(e, &ids_path))?;
        self.retained_manifest
            .save(dir.join("retained_manifest.json"))?;
        Ok(())
    }
}

/// PSMA records sorted by loss ascending, ties broken by id. Errors when any
/// PSMA record lacks metrics, naming the offenders.
pub fn rank_psma_by_loss(manifest: &CohortManifest) -> Result<Vec<(String, f64)>> {
    let mut missing = Vec::new();
    let mut ranked = Vec::new();
    for record in manifest.tracer_records(Tracer::Psma) {
        match record.loss() {
            Some(loss) => ranked.push((record.sample_id.clone(), loss)),
            None => missing.push(record.sample_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingMetrics(missing.len(), missing));
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Number of samples pruned at percentile `n` from a cohort of `count`.
pub fn exclusion_count(n: f64, count: usize) -> usize {
    (n / 100.0 * count as f64).ceil() as usize
}

/// Prune the n-th percentile of easiest PSMA samples (0 < n < 100).
pub fn prune_percentile(manifest: &CohortManifest, n: f64) -> Result<DietPlan> {
    if !n.is_finite() || n <= 0.0 || n >= 100.0 {
        return Err(Error::PercentileOutOfRange(n));
    }
    let ranked = rank_psma_by_loss(manifest)?;
    let k = exclusion_count(n, ranked.len()).min(ranked.len());
    let mut excluded_ids: Vec<String> =
        ranked[..k].iter().map(|(id, _)| id.clone()).collect();
    excluded_ids.sort();

    let excluded_set: std::collections::BTreeSet<&str> =
        excluded_ids.iter().map(String::as_str).collect();
    let retained_manifest = manifest.retain_where(
        format!("post {n}% diet (ranking: loss ascending, {k} PSMA excluded)"),
        |record| !excluded_set.contains(record.sample_id.as_str()),
    )?;

    Ok(DietPlan {
        percentile_n: n,
        ranking_metric: "loss".to_string(),
        excluded_ids,
        source_manifest_hash: manifest.digest(),
        retained_manifest,
    })
}

/// Outcome of checking that a plan excludes no healthy patient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HealthClaimReport {
    pub excluded_total: usize,
    pub healthy_excluded: usize,
    pub healthy_ids: Vec<String>,
    /// False when at least one excluded record is healthy; a diagnostic,
    /// not an error.
    pub claim_holds: bool,
}

/// Count excluded records with `is_sick == false`. Every excluded record
/// must carry a sickness label.
pub fn verify_diet_health_claim(
    plan: &DietPlan,
    manifest: &CohortManifest,
) -> Result<HealthClaimReport> {
    let mut unknown = Vec::new();
    let mut healthy_ids = Vec::new();
    for id in &plan.excluded_ids {
        match manifest.get(id).and_then(|r| r.is_sick) {
            Some(false) => healthy_ids.push(id.clone()),
            Some(true) => {}
            None => unknown.push(id.clone()),
        }
    }
    if !unknown.is_empty() {
        return Err(Error::MissingLabels(unknown.len(), unknown));
    }
    Ok(HealthClaimReport {
        excluded_total: plan.excluded_ids.len(),
        healthy_excluded: healthy_ids.len(),
        claim_holds: healthy_ids.is_empty(),
        healthy_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::SampleRecord;
    use crate::metrics::{MetricReport, LOSS_FORMULA};

    fn record(id: &str, loss: Option<f64>, sick: Option<bool>) -> SampleRecord {
        let mut r = SampleRecord::from_id(id).unwrap();
        r.metrics = loss.map(|loss| MetricReport {
            sample_id: id.to_string(),
            dice: 0.5,
            loss,
            fpv_ml: 0.0,
            fnv_ml: 0.0,
            threshold: 0.5,
            loss_formula: LOSS_FORMULA.to_string(),
        });
        r.is_sick = sick;
        r
    }

    fn cohort(psma_losses: &[(u32, f64)], fdg_count: usize) -> CohortManifest {
        let mut samples: Vec<SampleRecord> = psma_losses
            .iter()
            .map(|&(i, loss)| {
                record(
                    &format!("psma_{i:016x}_2020-01-01"),
                    Some(loss),
                    Some(true),
                )
            })
            .collect();
        for i in 0..fdg_count {
            samples.push(record(&format!("fdg_{i:016x}_2020-01-01"), None, Some(false)));
        }
        CohortManifest::new(samples, "test").unwrap()
    }

    #[test]
    fn ranking_sorts_ascending_with_id_tiebreak() {
        let m = cohort(&[(0xa, 0.3), (0xb, 0.1), (0xc, 0.2)], 2);
        let ranked = rank_psma_by_loss(&m).unwrap();
        let ids: Vec<&str> = ranked.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(
            ids,
            vec![
                "psma_000000000000000b_2020-01-01",
                "psma_000000000000000c_2020-01-01",
                "psma_000000000000000a_2020-01-01",
            ]
        );

        let tied = cohort(&[(0xb, 0.1), (0xa, 0.1)], 0);
        let ranked = rank_psma_by_loss(&tied).unwrap();
        assert!(ranked[0].0 < ranked[1].0);
    }

    #[test]
    fn fdg_only_cohort_ranks_empty() {
        let m = cohort(&[], 3);
        assert!(rank_psma_by_loss(&m).unwrap().is_empty());
    }

    #[test]
    fn missing_metrics_name_the_offenders() {
        let mut samples = vec![
            record("psma_00000000000000aa_2020-01-01", Some(0.1), Some(true)),
            record("psma_00000000000000bb_2020-01-01", None, Some(true)),
        ];
        samples.push(record("fdg_0000000000000001_2020-01-01", None, None));
        let m = CohortManifest::new(samples, "test").unwrap();
        match rank_psma_by_loss(&m) {
            Err(Error::MissingMetrics(1, ids)) => {
                assert_eq!(ids, vec!["psma_00000000000000bb_2020-01-01".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exclusion_counts_match_the_published_cardinalities() {
        assert_eq!(exclusion_count(5.0, 597), 30);
        assert_eq!(exclusion_count(3.0, 597), 18);
        assert_eq!(exclusion_count(1.0, 1), 1);
    }

    #[test]
    fn prune_excludes_easiest_and_keeps_all_fdg() {
        let losses: Vec<(u32, f64)> = (0..10).map(|i| (i, i as f64 / 10.0)).collect();
        let m = cohort(&losses, 4);
        let plan = prune_percentile(&m, 25.0).unwrap();
        // ceil(0.25 · 10) = 3 easiest
        assert_eq!(plan.excluded_count(), 3);
        for (i, id) in plan.excluded_ids.iter().enumerate() {
            assert_eq!(id, &format!("psma_{i:016x}_2020-01-01"));
        }
        assert_eq!(plan.retained_manifest.len(), m.len() - 3);
        let fdg_before: Vec<_> = m.tracer_records(Tracer::Fdg).collect();
        let fdg_after: Vec<_> = plan.retained_manifest.tracer_records(Tracer::Fdg).collect();
        assert_eq!(fdg_before, fdg_after);
        assert_eq!(plan.source_manifest_hash, m.digest());
        // excluded ∪ retained = source, excluded ∩ retained = ∅
        for id in &plan.excluded_ids {
            assert!(plan.retained_manifest.get(id).is_none());
            assert!(m.get(id).is_some());
        }
    }

    #[test]
    fn nesting_smaller_percentile_is_subset() {
        let losses: Vec<(u32, f64)> = (0..597).map(|i| (i, (i as f64).sin().abs())).collect();
        let m = cohort(&losses, 0);
        let plan3 = prune_percentile(&m, 3.0).unwrap();
        let plan5 = prune_percentile(&m, 5.0).unwrap();
        assert_eq!(plan3.excluded_count(), 18);
        assert_eq!(plan5.excluded_count(), 30);
        let set5: std::collections::BTreeSet<_> = plan5.excluded_ids.iter().collect();
        assert!(plan3.excluded_ids.iter().all(|id| set5.contains(id)));
    }

    #[test]
    fn percentile_bounds_are_enforced() {
        let m = cohort(&[(1, 0.5)], 0);
        for bad in [0.0, -3.0, 100.0, 120.0, f64::NAN] {
            assert!(matches!(
                prune_percentile(&m, bad),
                Err(Error::PercentileOutOfRange(_))
            ));
        }
    }

    #[test]
    fn identical_inputs_give_identical_plans() {
        let losses: Vec<(u32, f64)> = (0..40).map(|i| (i, (i as f64 * 0.7).cos())).collect();
        let m = cohort(&losses, 10);
        let a = prune_percentile(&m, 7.5).unwrap();
        let b = prune_percentile(&m, 7.5).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn health_claim_counts_healthy_exclusions() {
        let mut samples = vec![
            record("psma_00000000000000aa_2020-01-01", Some(0.1), Some(true)),
            record("psma_00000000000000bb_2020-01-01", Some(0.2), Some(false)),
            record("psma_00000000000000cc_2020-01-01", Some(0.9), Some(true)),
        ];
        samples.push(record("fdg_0000000000000001_2020-01-01", None, Some(true)));
        let m = CohortManifest::new(samples, "test").unwrap();

        let plan = prune_percentile(&m, 40.0).unwrap(); // ceil(1.2) = 2 excluded
        let report = verify_diet_health_claim(&plan, &m).unwrap();
        assert_eq!(report.excluded_total, 2);
        assert_eq!(report.healthy_excluded, 1);
        assert!(!report.claim_holds);
        assert_eq!(report.healthy_ids, vec!["psma_00000000000000bb_2020-01-01"]);

        let small = prune_percentile(&m, 1.0).unwrap(); // only the easiest (sick)
        let report = verify_diet_health_claim(&small, &m).unwrap();
        assert_eq!(report.healthy_excluded, 0);
        assert!(report.claim_holds);
    }

    #[test]
    fn health_claim_requires_labels() {
        let samples = vec![record("psma_00000000000000aa_2020-01-01", Some(0.1), None)];
        let m = CohortManifest::new(samples, "test").unwrap();
        let plan = prune_percentile(&m, 50.0).unwrap();
        assert!(matches!(
            verify_diet_health_claim(&plan, &m),
            Err(Error::MissingLabels(1, _))
        ));
    }

    #[test]
    fn plan_files_land_on_disk() {
        let losses: Vec<(u32, f64)> = (0..5).map(|i| (i, i as f64)).collect();
        let m = cohort(&losses, 1);
        let plan = prune_percentile(&m, 20.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        plan.write_files(dir.path()).unwrap();
        let ids = std::fs::read_to_string(dir.path().join("excluded_ids.txt")).unwrap();
        assert_eq!(ids.lines().count(), 1);
        let retained = CohortManifest::load(dir.path().join("retained_manifest.json")).unwrap();
        assert_eq!(retained.len(), 5);
        let plan_json = std::fs::read_to_string(dir.path().join("plan.json")).unwrap();
        let parsed: DietPlan = serde_json::from_str(&plan_json).unwrap();
        assert_eq!(parsed.excluded_ids, plan.excluded_ids);
    }
}
