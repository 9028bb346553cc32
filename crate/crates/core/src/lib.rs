//! datadiet-core: data-centric curation for PET/CT lesion-segmentation
//! datasets.
//!
//! The pipeline, end to end:
//!
//! 1. [`nifti`] / [`grid`] — load, validate, and write NIfTI-1 volumes.
//! 2. [`orient`] / [`preprocess`] — LAS reorientation, resampling to the
//!    canonical spacing, intensity normalization to `[0, 1]`.
//! 3. [`metrics`] — per-sample Dice, soft-Dice+BCE loss, and component-wise
//!    false-positive / false-negative volumes against a fixed model's
//!    predictions.
//! 4. [`cohort`] — dataset manifests, tracer/sick-rate statistics,
//!    histograms.
//! 5. [`diet`] — rank PSMA samples by loss and prune the easiest percentile,
//!    emitting the retraining manifest.
//! 6. [`distcompare`] — quantiles and QQ series of log-percentiles for
//!    pre- vs post-diet comparison.
//! 7. [`synth`] — synthetic volumes and cohorts with known ground truth.

pub mod cohort;
pub mod components;
pub mod diet;
pub mod distcompare;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod nifti;
pub mod orient;
pub mod preprocess;
pub mod synth;

pub use cohort::{
    cohort_stats, histogram, scan_dataset, CohortManifest, CohortStats, SampleRecord, Tracer,
};
pub use components::{connected_components, ComponentLabeling, Connectivity};
pub use diet::{prune_percentile, rank_psma_by_loss, verify_diet_health_claim, DietPlan};
pub use distcompare::{
    compare_cohort_metric, log_percentile_qq, quantile, DistributionSummary, MetricField,
    QQSeries, TracerFilter,
};
pub use error::{Error, Result};
pub use grid::{BinaryMask, GridKind, VoxelData, VoxelGrid};
pub use metrics::{
    dice_ce_loss, dice_score, evaluate_sample, false_negative_volume, false_positive_volume,
    threshold_mask, EvalParams, MetricReport,
};
pub use nifti::{load_nifti, write_nifti};
pub use orient::reorient_to_las;
pub use preprocess::{normalize_intensity, resample, Interpolation, PreprocessConfig};
pub use synth::{generate_cohort, make_cohort, make_mask, CohortSpec, Lesion, SynthSpec};
