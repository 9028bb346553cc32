//! Canonical-spacing resampling and intensity normalization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridKind, VoxelData, VoxelGrid};

/// Challenge spacing in millimeters.
pub const DEFAULT_TARGET_SPACING: [f64; 3] = [2.036, 2.036, 3.0];
/// Default CT clip window, Hounsfield units.
pub const DEFAULT_CT_CLIP: (f64, f64) = (-1024.0, 1024.0);
/// Default PET clip window, SUV.
pub const DEFAULT_PET_CLIP: (f64, f64) = (0.0, 40.0);

/// Volumes below this size are resampled on one thread.
const PARALLEL_VOXEL_THRESHOLD: usize = 1 << 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Trilinear,
    NearestNeighbor,
}

impl std::fmt::Display for Interpolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Interpolation::Trilinear => write!(f, "trilinear"),
            Interpolation::NearestNeighbor => write!(f, "nearest"),
        }
    }
}

impl std::str::FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "trilinear" | "linear" => Ok(Interpolation::Trilinear),
            "nearest" | "nearest_neighbor" | "nearestneighbor" | "nn" => {
                Ok(Interpolation::NearestNeighbor)
            }
            other => Err(Error::InvalidConfig(format!(
                "unknown interpolation {other:?} (expected trilinear or nearest)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub target_spacing: [f64; 3],
    pub ct_clip: (f64, f64),
    pub pet_clip: (f64, f64),
    pub interpolation: Interpolation,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_spacing: DEFAULT_TARGET_SPACING,
            ct_clip: DEFAULT_CT_CLIP,
            pet_clip: DEFAULT_PET_CLIP,
            interpolation: Interpolation::Trilinear,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_spacing.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "target_spacing must be positive, got {:?}",
                self.target_spacing
            )));
        }
        for (name, (lo, hi)) in [("ct_clip", self.ct_clip), ("pet_clip", self.pet_clip)] {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidConfig(format!(
                    "{name} low bound {lo} must be below high bound {hi}"
                )));
            }
        }
        Ok(())
    }

    /// Render as a `key = value` config file.
    pub fn to_config_string(&self) -> String {
        format!(
            "target_spacing = {}, {}, {}\nct_clip = {}, {}\npet_clip = {}, {}\ninterpolation = {}\n",
            self.target_spacing[0],
            self.target_spacing[1],
            self.target_spacing[2],
            self.ct_clip.0,
            self.ct_clip.1,
            self.pet_clip.0,
            self.pet_clip.1,
            self.interpolation,
        )
    }

    /// Parse the `key = value` format written by [`to_config_string`].
    /// Unknown keys are rejected; missing keys keep their defaults.
    ///
    /// [`to_config_string`]: PreprocessConfig::to_config_string
    pub fn from_config_string(text: &str) -> Result<Self> {
        let mut config = PreprocessConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "target_spacing" => {
                    let v = parse_floats(value, 3, key)?;
                    config.target_spacing = [v[0], v[1], v[2]];
                }
                "ct_clip" => {
                    let v = parse_floats(value, 2, key)?;
                    config.ct_clip = (v[0], v[1]);
                }
                "pet_clip" => {
                    let v = parse_floats(value, 2, key)?;
                    config.pet_clip = (v[0], v[1]);
                }
                "interpolation" => config.interpolation = value.parse()?,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn parse_floats(value: &str, expected: usize, key: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidConfig(format!("{key}: {e}")))?;
    if parts.len() != expected {
        return Err(Error::InvalidConfig(format!(
            "{key}: expected {expected} comma-separated values, got {}",
            parts.len()
        )));
    }
    Ok(parts)
}

/// Resample a grid to `target_spacing`, preserving origin and direction.
///
/// Output dims are `round(dims · spacing / target)` (half away from zero),
/// clamped to at least 1. Out-of-range samples clamp to the volume edge.
/// Label grids require nearest-neighbor interpolation.
pub fn resample(
    grid: &VoxelGrid,
    target_spacing: [f64; 3],
    interpolation: Interpolation,
) -> Result<VoxelGrid> {
    if target_spacing.iter().any(|&s| !s.is_finite() || s <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target spacing must be positive, got {target_spacing:?}"
        )));
    }
    if grid.kind() == GridKind::Label && interpolation == Interpolation::Trilinear {
        return Err(Error::LabelInterpolation);
    }

    let in_dims = grid.dims();
    let in_spacing = grid.spacing();
    let mut out_dims = [0usize; 3];
    let mut ratio = [0f64; 3]; // output index → input index scale
    for a in 0..3 {
        let exact = in_dims[a] as f64 * in_spacing[a] / target_spacing[a];
        out_dims[a] = (exact.round() as usize).max(1);
        ratio[a] = target_spacing[a] / in_spacing[a];
    }

    let data = match grid.data() {
        VoxelData::Scalar(values) => match interpolation {
            Interpolation::Trilinear => VoxelData::Scalar(sample_slices(
                out_dims,
                |out, z| trilinear_slice(values, in_dims, ratio, out_dims, z, out),
            )),
            Interpolation::NearestNeighbor => VoxelData::Scalar(sample_slices(
                out_dims,
                |out, z| nearest_slice(values, in_dims, ratio, out_dims, z, out),
            )),
        },
        VoxelData::Label(values) => VoxelData::Label(sample_slices(out_dims, |out, z| {
            nearest_slice(values, in_dims, ratio, out_dims, z, out)
        })),
    };

    VoxelGrid::new(
        out_dims,
        target_spacing,
        grid.origin(),
        grid.direction(),
        data,
    )
}

/// Run `fill` once per output z-slice, in parallel for large volumes.
fn sample_slices<T: Copy + Default + Send + Sync>(
    out_dims: [usize; 3],
    fill: impl Fn(&mut [T], usize) + Send + Sync,
) -> Vec<T> {
    let slice_len = out_dims[0] * out_dims[1];
    let n = slice_len * out_dims[2];
    let mut out = vec![T::default(); n];
    if n >= PARALLEL_VOXEL_THRESHOLD {
        out.par_chunks_mut(slice_len)
            .enumerate()
            .for_each(|(z, chunk)| fill(chunk, z));
    } else {
        for (z, chunk) in out.chunks_mut(slice_len).enumerate() {
            fill(chunk, z);
        }
    }
    out
}

/// Nearest input index for output index `i`; exact midpoints resolve to the
/// lower index.
#[inline]
fn nearest_index(i: usize, ratio: f64, max_index: usize) -> usize {
    let u = i as f64 * ratio;
    let snapped = (u - 0.5).ceil();
    (snapped.max(0.0) as usize).min(max_index)
}

fn nearest_slice<T: Copy>(
    values: &[T],
    in_dims: [usize; 3],
    ratio: [f64; 3],
    out_dims: [usize; 3],
    z: usize,
    out: &mut [T],
) {
    let zi = nearest_index(z, ratio[2], in_dims[2] - 1);
    let mut k = 0;
    for y in 0..out_dims[1] {
        let yi = nearest_index(y, ratio[1], in_dims[1] - 1);
        let row = in_dims[0] * (yi + in_dims[1] * zi);
        for x in 0..out_dims[0] {
            let xi = nearest_index(x, ratio[0], in_dims[0] - 1);
            out[k] = values[row + xi];
            k += 1;
        }
    }
}

/// Continuous input coordinate split into base index and fraction, with the
/// sample clamped to the volume (edge extension past the boundary).
#[inline]
fn interp_coord(i: usize, ratio: f64, dim: usize) -> (usize, usize, f64) {
    let u = (i as f64 * ratio).clamp(0.0, (dim - 1) as f64);
    let i0 = u.floor() as usize;
    let i1 = (i0 + 1).min(dim - 1);
    (i0, i1, u - i0 as f64)
}

fn trilinear_slice(
    values: &[f32],
    in_dims: [usize; 3],
    ratio: [f64; 3],
    out_dims: [usize; 3],
    z: usize,
    out: &mut [f32],
) {
    let (z0, z1, fz) = interp_coord(z, ratio[2], in_dims[2]);
    let plane = in_dims[0] * in_dims[1];
    let mut k = 0;
    for y in 0..out_dims[1] {
        let (y0, y1, fy) = interp_coord(y, ratio[1], in_dims[1]);
        let row00 = in_dims[0] * y0 + plane * z0;
        let row10 = in_dims[0] * y1 + plane * z0;
        let row01 = in_dims[0] * y0 + plane * z1;
        let row11 = in_dims[0] * y1 + plane * z1;
        for x in 0..out_dims[0] {
            let (x0, x1, fx) = interp_coord(x, ratio[0], in_dims[0]);
            let c000 = values[row00 + x0] as f64;
            let c100 = values[row00 + x1] as f64;
            let c010 = values[row10 + x0] as f64;
            let c110 = values[row10 + x1] as f64;
            let c001 = values[row01 + x0] as f64;
            let c101 = values[row01 + x1] as f64;
            let c011 = values[row11 + x0] as f64;
            let c111 = values[row11 + x1] as f64;
            let c00 = c000 + (c100 - c000) * fx;
            let c10 = c010 + (c110 - c010) * fx;
            let c01 = c001 + (c101 - c001) * fx;
            let c11 = c011 + (c111 - c011) * fx;
            let c0 = c00 + (c10 - c00) * fy;
            let c1 = c01 + (c11 - c01) * fy;
            out[k] = (c0 + (c1 - c0) * fz) as f32;
            k += 1;
        }
    }
}

/// Clamp to `[lo, hi]` then rescale affinely onto `[0, 1]`.
pub fn normalize_intensity(grid: &VoxelGrid, clip: (f64, f64)) -> Result<VoxelGrid> {
    let (lo, hi) = clip;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::InvalidArgument(format!(
            "clip low bound {lo} must be below high bound {hi}"
        )));
    }
    let values = grid.as_scalar().ok_or(Error::KindMismatch {
        op: "normalize_intensity",
        expected: "scalar",
    })?;
    let span = hi - lo;
    let out: Vec<f32> = values
        .iter()
        .map(|&v| (((v as f64).clamp(lo, hi) - lo) / span) as f32)
        .collect();
    VoxelGrid::new(
        grid.dims(),
        grid.spacing(),
        grid.origin(),
        grid.direction(),
        VoxelData::Scalar(out),
    )
}
