use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;

use datadiet_core::cohort::{CohortManifest, SampleRecord};
use datadiet_core::grid::VoxelGrid;
use datadiet_core::preprocess::{normalize_intensity, resample, Interpolation, PreprocessConfig};
use datadiet_core::{nifti, orient};

use crate::{diag, CmdStatus};

#[derive(Args)]
pub struct PreprocessArgs {
    /// Input manifest
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for the processed volumes and the new manifest
    #[arg(long)]
    out_dir: PathBuf,
    /// `key = value` config file (flags below override its values)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Canonical spacing in mm, e.g. 2.036,2.036,3.0
    #[arg(long, value_name = "X,Y,Z")]
    target_spacing: Option<String>,
    /// CT clip window in HU, e.g. -1024,1024
    #[arg(long, value_name = "LO,HI", allow_hyphen_values = true)]
    ct_clip: Option<String>,
    /// PET clip window in SUV, e.g. 0,40
    #[arg(long, value_name = "LO,HI", allow_hyphen_values = true)]
    pet_clip: Option<String>,
    /// trilinear | nearest (labels always use nearest)
    #[arg(long)]
    interpolation: Option<String>,
}

fn parse_floats(text: &str, expected: usize, what: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing {what} {text:?}"))?;
    anyhow::ensure!(
        parts.len() == expected,
        "{what} needs {expected} comma-separated numbers, got {}",
        parts.len()
    );
    Ok(parts)
}

fn effective_config(args: &PreprocessArgs) -> anyhow::Result<PreprocessConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            PreprocessConfig::from_config_string(&text)?
        }
        None => PreprocessConfig::default(),
    };
    if let Some(spacing) = &args.target_spacing {
        let v = parse_floats(spacing, 3, "--target-spacing")?;
        config.target_spacing = [v[0], v[1], v[2]];
    }
    if let Some(clip) = &args.ct_clip {
        let v = parse_floats(clip, 2, "--ct-clip")?;
        config.ct_clip = (v[0], v[1]);
    }
    if let Some(clip) = &args.pet_clip {
        let v = parse_floats(clip, 2, "--pet-clip")?;
        config.pet_clip = (v[0], v[1]);
    }
    if let Some(mode) = &args.interpolation {
        config.interpolation = mode.parse::<Interpolation>()?;
    }
    config.validate()?;
    Ok(config)
}

enum Role {
    Ct,
    Pet,
    Label,
    Pred,
}

fn process_volume(
    path: &Path,
    role: &Role,
    config: &PreprocessConfig,
) -> datadiet_core::Result<VoxelGrid> {
    let grid = nifti::load_nifti(path)?;
    let grid = match role {
        Role::Label => grid.to_label()?,
        _ => grid.to_scalar(),
    };
    let grid = orient::reorient_to_las(&grid)?;
    let interpolation = match role {
        Role::Label => Interpolation::NearestNeighbor,
        _ => config.interpolation,
    };
    let grid = resample(&grid, config.target_spacing, interpolation)?;
    match role {
        Role::Ct => normalize_intensity(&grid, config.ct_clip),
        Role::Pet => normalize_intensity(&grid, config.pet_clip),
        Role::Label | Role::Pred => Ok(grid),
    }
}

fn process_record(
    record: &SampleRecord,
    config: &PreprocessConfig,
    out_dir: &Path,
) -> datadiet_core::Result<SampleRecord> {
    let mut out = SampleRecord::from_id(&record.sample_id)?;
    out.is_sick = record.is_sick;
    let roles = [
        (Role::Ct, &record.ct_path),
        (Role::Pet, &record.pet_path),
        (Role::Label, &record.label_path),
        (Role::Pred, &record.pred_path),
    ];
    for (role, path) in roles {
        let Some(path) = path else { continue };
        let grid = process_volume(path, &role, config)?;
        let suffix = match role {
            Role::Ct => "ct",
            Role::Pet => "pet",
            Role::Label => "label",
            Role::Pred => "pred",
        };
        let relative = PathBuf::from(format!("{}_{suffix}.nii.gz", record.sample_id));
        nifti::write_nifti(&grid, out_dir.join(&relative))?;
        // resampling can erase a tiny lesion, so sickness is re-derived
        if matches!(role, Role::Label) {
            out.is_sick = Some(grid.as_label().is_some_and(|v| v.iter().any(|&x| x != 0)));
        }
        match role {
            Role::Ct => out.ct_path = Some(relative),
            Role::Pet => out.pet_path = Some(relative),
            Role::Label => out.label_path = Some(relative),
            Role::Pred => out.pred_path = Some(relative),
        }
    }
    Ok(out)
}

pub fn run(args: PreprocessArgs) -> anyhow::Result<CmdStatus> {
    let config = effective_config(&args)?;
    let manifest = CohortManifest::load(&args.manifest)
        .with_context(|| format!("loading {}", args.manifest.display()))?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let results: Vec<(usize, datadiet_core::Result<SampleRecord>)> = manifest
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, record)| (i, process_record(record, &config, &args.out_dir)))
        .collect();

    let mut processed = Vec::new();
    let mut skipped = 0usize;
    for (i, result) in results {
        match result {
            Ok(record) => processed.push(record),
            Err(err) => {
                skipped += 1;
                diag::warn(&manifest.samples()[i].sample_id, format_args!("skipped: {err}"));
            }
        }
    }

    let out_manifest = CohortManifest::new(
        processed,
        format!(
            "preprocessed from {} [{}]",
            args.manifest.display(),
            config.to_config_string().trim().replace('\n', "; ")
        ),
    )?;
    out_manifest.save(args.out_dir.join("manifest.json"))?;
    std::fs::write(
        args.out_dir.join("preprocess.conf"),
        config.to_config_string(),
    )
    .context("writing preprocess.conf")?;

    println!(
        "preprocessed {} sample(s) into {} ({} skipped)",
        out_manifest.len(),
        args.out_dir.display(),
        skipped
    );
    Ok(if skipped == 0 {
        CmdStatus::Success
    } else {
        CmdStatus::Partial
    })
}
