//! Dataset manifest: sample records, directory scanning, and cohort
//! imbalance statistics.
//!
//! Sample ids follow the `<tracer>_<patient-hash>_<date>` form, e.g.
//! `psma_324f91cd0ec8a80e_2017-03-04`. A sample is "sick" when its
//! ground-truth label has at least one foreground voxel.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distcompare::DistributionSummary;
use crate::error::{Error, Result};
use crate::grid::VoxelData;
use crate::metrics::MetricReport;
use crate::nifti::load_nifti;

pub const MANIFEST_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tracer {
    #[serde(rename = "FDG")]
    Fdg,
    #[serde(rename = "PSMA")]
    Psma,
}

impl Tracer {
    /// Lowercase id prefix ("fdg" / "psma").
    pub fn prefix(self) -> &'static str {
        match self {
            Tracer::Fdg => "fdg",
            Tracer::Psma => "psma",
        }
    }

    pub fn from_prefix(prefix: &str) -> Result<Self> {
        match prefix {
            "fdg" => Ok(Tracer::Fdg),
            "psma" => Ok(Tracer::Psma),
            other => Err(Error::MalformedId(
                other.to_string(),
                "tracer prefix must be fdg or psma".into(),
            )),
        }
    }

    /// Tracer of a full sample id, from its prefix.
    pub fn from_id_prefix(sample_id: &str) -> Result<Self> {
        let prefix = sample_id.split('_').next().unwrap_or_default();
        Self::from_prefix(prefix).map_err(|_| {
            Error::MalformedId(
                sample_id.to_string(),
                "id must start with fdg_ or psma_".into(),
            )
        })
    }
}

impl std::fmt::Display for Tracer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tracer::Fdg => write!(f, "FDG"),
            Tracer::Psma => write!(f, "PSMA"),
        }
    }
}

/// Split and validate `<tracer>_<hex-hash>_<YYYY-MM-DD>`.
pub fn parse_sample_id(sample_id: &str) -> Result<(Tracer, &str, &str)> {
    let malformed = |why: &str| Error::MalformedId(sample_id.to_string(), why.to_string());
    let mut parts = sample_id.split('_');
    let (prefix, hash, date) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(p), Some(h), Some(d), None) => (p, h, d),
        _ => return Err(malformed("expected <tracer>_<hash>_<date>")),
    };
    let tracer = Tracer::from_prefix(prefix)
        .map_err(|_| malformed("tracer prefix must be fdg or psma"))?;
    if hash.is_empty()
        || !hash
            .chars()
            .all(|c| c.is_ascii_digit() || ('a'..='f').contains(&c))
    {
        return Err(malformed("patient hash must be lowercase hex"));
    }
    let shaped = date.len() == 10
        && date.as_bytes()[4] == b'-'
        && date.as_bytes()[7] == b'-'
        && date
            .bytes()
            .enumerate()
            .all(|(i, b)| i == 4 || i == 7 || b.is_ascii_digit());
    if !shaped || NaiveDate::parse_from_str(date, "%Y-%m-%d").is_err() {
        return Err(malformed("study date must be a valid YYYY-MM-DD"));
    }
    Ok((tracer, hash, date))
}

/// One dataset entry: identity, file paths, and optional measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub tracer: Tracer,
    pub patient_hash: String,
    pub study_date: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ct_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pet_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_sick: Option<bool>,
}

impl SampleRecord {
    pub fn from_id(sample_id: &str) -> Result<Self> {
        let (tracer, hash, date) = parse_sample_id(sample_id)?;
        Ok(SampleRecord {
            sample_id: sample_id.to_string(),
            tracer,
            patient_hash: hash.to_string(),
            study_date: date.to_string(),
            ct_path: None,
            pet_path: None,
            label_path: None,
            pred_path: None,
            metrics: None,
            is_sick: None,
        })
    }

    fn validate(&self) -> Result<()> {
        let (tracer, hash, date) = parse_sample_id(&self.sample_id)?;
        if tracer != self.tracer || hash != self.patient_hash || date != self.study_date {
            return Err(Error::Manifest(format!(
                "record fields disagree with sample_id {:?}",
                self.sample_id
            )));
        }
        Ok(())
    }

    pub fn loss(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.loss)
    }
}

/// The versioned, sorted collection of all sample records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    version: String,
    provenance: String,
    samples: Vec<SampleRecord>,
}

impl CohortManifest {
    /// Build a manifest: records are sorted by id and ids must be unique.
    pub fn new(samples: Vec<SampleRecord>, provenance: impl Into<String>) -> Result<Self> {
        let mut manifest = CohortManifest {
            version: MANIFEST_VERSION.to_string(),
            provenance: provenance.into(),
            samples,
        };
        manifest.normalize()?;
        Ok(manifest)
    }

    fn normalize(&mut self) -> Result<()> {
        for record in &self.samples {
            record.validate()?;
        }
        self.samples
            .sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        if let Some(pair) = self
            .samples
            .windows(2)
            .find(|w| w[0].sample_id == w[1].sample_id)
        {
            return Err(Error::Manifest(format!(
                "duplicate sample id {:?}",
                pair[0].sample_id
            )));
        }
        Ok(())
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, sample_id: &str) -> Option<&SampleRecord> {
        self.samples
            .binary_search_by(|r| r.sample_id.as_str().cmp(sample_id))
            .ok()
            .map(|i| &self.samples[i])
    }

    pub fn tracer_records(&self, tracer: Tracer) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(move |r| r.tracer == tracer)
    }

    /// Attach metric reports by sample id; returns how many matched.
    pub fn attach_metrics(&mut self, reports: &[MetricReport]) -> usize {
        let by_id: BTreeMap<&str, &MetricReport> = reports
            .iter()
            .map(|r| (r.sample_id.as_str(), r))
            .collect();
        let mut attached = 0;
        for record in &mut self.samples {
            if let Some(&report) = by_id.get(record.sample_id.as_str()) {
                record.metrics = Some(report.clone());
                attached += 1;
            }
        }
        attached
    }

    /// New manifest with the records passing `keep`, fresh provenance.
    pub fn retain_where(
        &self,
        provenance: impl Into<String>,
        mut keep: impl FnMut(&SampleRecord) -> bool,
    ) -> Result<CohortManifest> {
        CohortManifest::new(
            self.samples.iter().filter(|r| keep(r)).cloned().collect(),
            provenance,
        )
    }

    /// SHA-256 of the canonical serialization; changes whenever any record,
    /// metric, or the provenance changes.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("manifest serialization is infallible");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex_string(&hasher.finalize())
    }

    pub fn to_json(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(self).expect("manifest serialization is infallible");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut manifest: CohortManifest = serde_json::from_str(text)?;
        manifest.normalize()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(e, path))
    }

    /// Load a manifest; relative record paths are resolved against the
    /// manifest's directory and become absolute, so manifests derived from
    /// this one stay valid wherever they are saved.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(e, path))?;
        let mut manifest = Self::from_json(&text)?;
        let base = absolutize(path.parent().unwrap_or(Path::new("")));
        manifest.resolve_paths(&base);
        Ok(manifest)
    }

    /// Resolve relative record paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&path);
                }
            }
        };
        for record in &mut self.samples {
            resolve(&mut record.ct_path);
            resolve(&mut record.pet_path);
            resolve(&mut record.label_path);
            resolve(&mut record.pred_path);
        }
    }
}

fn absolutize(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        std::env::current_dir()
            .map(|cwd| cwd.join(path))
            .unwrap_or_else(|_| path.to_path_buf())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanIssue {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub manifest: CohortManifest,
    /// Malformed ids, unreadable labels, duplicate roles. Reported, never
    /// silently dropped.
    pub issues: Vec<ScanIssue>,
}

const ROLES: [&str; 4] = ["ct", "pet", "label", "pred"];

fn nifti_stem(file_name: &str) -> Option<&str> {
    file_name
        .strip_suffix(".nii.gz")
        .or_else(|| file_name.strip_suffix(".nii"))
}

/// Discover `<id>_<role>.nii[.gz]` files under `root` and assemble one
/// record per sample id. `is_sick` is filled from loadable label volumes.
pub fn scan_dataset(root: impl AsRef<Path>) -> Result<ScanOutcome> {
    // Absolute record paths keep the manifest valid no matter where it is
    // saved later.
    let root = absolutize(root.as_ref());
    let root = root.as_path();
    let mut issues = Vec::new();
    let mut records: BTreeMap<String, SampleRecord> = BTreeMap::new();

    let mut entries: Vec<PathBuf> = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            Error::io(
                e.into_io_error()
                    .unwrap_or_else(|| std::io::Error::other("walk error")),
                root,
            )
        })?;
        if entry.file_type().is_file() {
            entries.push(entry.into_path());
        }
    }

    for path in entries {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = nifti_stem(name) else {
            continue; // not a volume
        };
        let Some((id_part, role)) = stem.rsplit_once('_').filter(|(_, r)| ROLES.contains(r))
        else {
            issues.push(ScanIssue {
                path: path.clone(),
                message: format!(
                    "file stem {stem:?} lacks a role suffix (_ct, _pet, _label, _pred)"
                ),
            });
            continue;
        };
        let record = match records.get_mut(id_part) {
            Some(existing) => existing,
            None => match SampleRecord::from_id(id_part) {
                Ok(record) => records.entry(id_part.to_string()).or_insert(record),
                Err(e) => {
                    issues.push(ScanIssue {
                        path: path.clone(),
                        message: e.to_string(),
                    });
                    continue;
                }
            },
        };
        let slot = match role {
            "ct" => &mut record.ct_path,
            "pet" => &mut record.pet_path,
            "label" => &mut record.label_path,
            _ => &mut record.pred_path,
        };
        if let Some(previous) = slot {
            issues.push(ScanIssue {
                path: path.clone(),
                message: format!(
                    "duplicate {role} volume (already have {})",
                    previous.display()
                ),
            });
        } else {
            *slot = Some(path);
        }
    }

    let mut samples: Vec<SampleRecord> = records.into_values().collect();
    let sick_results: Vec<(usize, std::result::Result<bool, String>)> = samples
        .par_iter()
        .enumerate()
        .filter_map(|(i, record)| {
            let label_path = record.label_path.as_ref()?;
            let outcome = load_nifti(label_path)
                .map(|grid| match grid.data() {
                    VoxelData::Label(v) => v.iter().any(|&x| x != 0),
                    VoxelData::Scalar(v) => v.iter().any(|&x| x != 0.0),
                })
                .map_err(|e| e.to_string());
            Some((i, outcome))
        })
        .collect();
    for (i, outcome) in sick_results {
        match outcome {
            Ok(sick) => samples[i].is_sick = Some(sick),
            Err(message) => issues.push(ScanIssue {
                path: samples[i].label_path.clone().unwrap_or_default(),
                message: format!("label unreadable: {message}"),
            }),
        }
    }

    let manifest = CohortManifest::new(samples, format!("scanned from {}", root.display()))?;
    Ok(ScanOutcome { manifest, issues })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracerBreakdown {
    pub count: usize,
    /// `count / total`; absent for an empty cohort.
    pub fraction: Option<f64>,
    pub sick: usize,
    pub healthy: usize,
    pub unknown: usize,
    /// `sick / (sick + healthy)`; absent when no record has a known label.
    pub sick_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CohortStats {
    pub total: usize,
    pub fdg: TracerBreakdown,
    pub psma: TracerBreakdown,
    /// Records that carry no metrics and would be skipped by aggregations.
    pub missing_metrics: usize,
}

pub fn cohort_stats(manifest: &CohortManifest) -> CohortStats {
    let total = manifest.len();
    let breakdown = |tracer: Tracer| {
        let mut count = 0;
        let mut sick = 0;
        let mut healthy = 0;
        let mut unknown = 0;
        for record in manifest.tracer_records(tracer) {
            count += 1;
            match record.is_sick {
                Some(true) => sick += 1,
                Some(false) => healthy += 1,
                None => unknown += 1,
            }
        }
        TracerBreakdown {
            count,
            fraction: (total > 0).then(|| count as f64 / total as f64),
            sick,
            healthy,
            unknown,
            sick_rate: (sick + healthy > 0).then(|| sick as f64 / (sick + healthy) as f64),
        }
    };
    CohortStats {
        total,
        fdg: breakdown(Tracer::Fdg),
        psma: breakdown(Tracer::Psma),
        missing_metrics: manifest
            .samples()
            .iter()
            .filter(|r| r.metrics.is_none())
            .count(),
    }
}

/// Equal-width histogram over `[min, max]`; the last bin is right-inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bin_count + 1` edges (2 for a degenerate single-value input).
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Sorted raw values for later quantile queries.
    pub summary: DistributionSummary,
}

pub fn histogram(values: &[f64], bin_count: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::EmptyInput("histogram over no values"));
    }
    if bin_count == 0 {
        return Err(Error::InvalidArgument("bin_count must be at least 1".into()));
    }
    let summary = DistributionSummary::new(values.to_vec(), "")?;
    let (min, max) = (summary.min(), summary.max());
    if min == max {
        return Ok(Histogram {
            edges: vec![min, max],
            counts: vec![values.len()],
            summary,
        });
    }
    let width = (max - min) / bin_count as f64;
    let mut counts = vec![0usize; bin_count];
    for &v in summary.sorted_values() {
        let bin = (((v - min) / width) as usize).min(bin_count - 1);
        counts[bin] += 1;
    }
    let edges = (0..=bin_count)
        .map(|i| min + width * i as f64)
        .collect();
    Ok(Histogram {
        edges,
        counts,
        summary,
    })
}
