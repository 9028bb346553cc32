//! 3D volume representation: a flat voxel buffer plus spatial metadata.
//!
//! `VoxelGrid` is the currency every stage of the pipeline trades in. Voxels
//! are stored x-fastest (`idx = x + nx*(y + ny*z)`), world coordinates follow
//! the NIfTI convention `world = direction · diag(spacing) · index + origin`.

use crate::error::{Error, Result};

/// Orthonormality tolerance for direction-cosine columns.
pub const DIRECTION_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// 32-bit floating-point semantics (CT/PET intensities, probabilities).
    Scalar,
    /// Non-negative integer semantics (segmentations, component labels).
    Label,
}

impl std::fmt::Display for GridKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridKind::Scalar => write!(f, "scalar"),
            GridKind::Label => write!(f, "label"),
        }
    }
}

/// Voxel buffer, variant fixed by the grid kind.
#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    Scalar(Vec<f32>),
    Label(Vec<i32>),
}

impl VoxelData {
    pub fn len(&self) -> usize {
        match self {
            VoxelData::Scalar(v) => v.len(),
            VoxelData::Label(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> GridKind {
        match self {
            VoxelData::Scalar(_) => GridKind::Scalar,
            VoxelData::Label(_) => GridKind::Label,
        }
    }
}

/// A 3D scalar or label volume with spacing, origin, and direction metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    /// Millimeters per voxel along each axis; strictly positive.
    spacing: [f64; 3],
    /// World-space position of voxel (0, 0, 0), millimeters.
    origin: [f64; 3],
    /// Direction cosines, `direction[row][col]`; column `c` is the world
    /// direction of voxel axis `c`.
    direction: [[f64; 3]; 3],
    data: VoxelData,
}

pub const IDENTITY_DIRECTION: [[f64; 3]; 3] =
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

impl VoxelGrid {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        direction: [[f64; 3]; 3],
        data: VoxelData,
    ) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidGrid(format!("zero dimension in {dims:?}")));
        }
        if spacing.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::InvalidGrid(format!(
                "non-positive spacing {spacing:?}"
            )));
        }
        validate_direction(&direction)?;
        let expected = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidGrid(format!("voxel count overflow for {dims:?}")))?;
        if data.len() != expected {
            return Err(Error::InvalidGrid(format!(
                "buffer length {} does not match dims {:?} ({} voxels)",
                data.len(),
                dims,
                expected
            )));
        }
        if let VoxelData::Label(values) = &data {
            if values.iter().any(|&v| v < 0) {
                return Err(Error::InvalidGrid(
                    "label grid contains negative values".into(),
                ));
            }
        }
        Ok(VoxelGrid {
            dims,
            spacing,
            origin,
            direction,
            data,
        })
    }

    /// Scalar grid with identity direction and zero origin.
    pub fn scalar(dims: [usize; 3], spacing: [f64; 3], data: Vec<f32>) -> Result<Self> {
        Self::new(
            dims,
            spacing,
            [0.0; 3],
            IDENTITY_DIRECTION,
            VoxelData::Scalar(data),
        )
    }

    /// Label grid with identity direction and zero origin.
    pub fn label(dims: [usize; 3], spacing: [f64; 3], data: Vec<i32>) -> Result<Self> {
        Self::new(
            dims,
            spacing,
            [0.0; 3],
            IDENTITY_DIRECTION,
            VoxelData::Label(data),
        )
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn direction(&self) -> [[f64; 3]; 3] {
        self.direction
    }

    pub fn kind(&self) -> GridKind {
        self.data.kind()
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_scalar(&self) -> Option<&[f32]> {
        match &self.data {
            VoxelData::Scalar(v) => Some(v),
            VoxelData::Label(_) => None,
        }
    }

    pub fn as_label(&self) -> Option<&[i32]> {
        match &self.data {
            VoxelData::Label(v) => Some(v),
            VoxelData::Scalar(_) => None,
        }
    }

    pub fn with_origin(mut self, origin: [f64; 3]) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_direction(self, direction: [[f64; 3]; 3]) -> Result<Self> {
        validate_direction(&direction)?;
        Ok(VoxelGrid { direction, ..self })
    }

    /// Linear buffer index of voxel `(x, y, z)`; x-fastest order.
    #[inline]
    pub fn linear_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// World coordinate (mm) of a voxel center.
    pub fn world_coord(&self, index: [usize; 3]) -> [f64; 3] {
        let mut world = self.origin;
        for (r, w) in world.iter_mut().enumerate() {
            *w += self.direction[r]
                .iter()
                .zip(self.spacing)
                .zip(index)
                .map(|((d, s), i)| d * s * i as f64)
                .sum::<f64>();
        }
        world
    }

    /// Physical volume of one voxel in cubic millimeters.
    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Convert to scalar kind. Labels map exactly for values below 2^24.
    pub fn to_scalar(&self) -> VoxelGrid {
        match &self.data {
            VoxelData::Scalar(_) => self.clone(),
            VoxelData::Label(values) => VoxelGrid {
                data: VoxelData::Scalar(values.iter().map(|&v| v as f32).collect()),
                ..self.clone()
            },
        }
    }

    /// Convert to label kind; errors when a scalar voxel is not a
    /// non-negative integer.
    pub fn to_label(&self) -> Result<VoxelGrid> {
        match &self.data {
            VoxelData::Label(_) => Ok(self.clone()),
            VoxelData::Scalar(values) => {
                let mut out = Vec::with_capacity(values.len());
                for &v in values {
                    if !v.is_finite() || v < 0.0 || v.fract() != 0.0 {
                        return Err(Error::InvalidGrid(format!(
                            "scalar value {v} is not a non-negative integer"
                        )));
                    }
                    out.push(v as i32);
                }
                Ok(VoxelGrid {
                    data: VoxelData::Label(out),
                    ..self.clone()
                })
            }
        }
    }
}

fn validate_direction(direction: &[[f64; 3]; 3]) -> Result<()> {
    for c in 0..3 {
        let col = [direction[0][c], direction[1][c], direction[2][c]];
        let norm = (col[0] * col[0] + col[1] * col[1] + col[2] * col[2]).sqrt();
        if (norm - 1.0).abs() > DIRECTION_TOLERANCE {
            return Err(Error::InvalidGrid(format!(
                "direction column {c} has norm {norm}"
            )));
        }
        for c2 in (c + 1)..3 {
            let dot = (0..3).map(|r| direction[r][c] * direction[r][c2]).sum::<f64>();
            if dot.abs() > DIRECTION_TOLERANCE {
                return Err(Error::InvalidGrid(format!(
                    "direction columns {c} and {c2} are not orthogonal (dot {dot})"
                )));
            }
        }
    }
    Ok(())
}

/// A label grid restricted to values {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask(VoxelGrid);

impl BinaryMask {
    /// Strict constructor: the grid must be a label grid over {0, 1}.
    pub fn from_grid(grid: VoxelGrid) -> Result<Self> {
        let values = grid
            .as_label()
            .ok_or(Error::KindMismatch {
                op: "BinaryMask::from_grid",
                expected: "label",
            })?;
        if let Some(&bad) = values.iter().find(|&&v| v != 0 && v != 1) {
            return Err(Error::InvalidGrid(format!(
                "mask voxel value {bad} outside {{0, 1}}"
            )));
        }
        Ok(BinaryMask(grid))
    }

    /// Lenient constructor: any nonzero voxel becomes foreground. Accepts
    /// scalar grids with integral values.
    pub fn binarize(grid: &VoxelGrid) -> Result<Self> {
        let data: Vec<i32> = match grid.data() {
            VoxelData::Label(v) => v.iter().map(|&x| i32::from(x != 0)).collect(),
            VoxelData::Scalar(v) => v.iter().map(|&x| i32::from(x != 0.0)).collect(),
        };
        Ok(BinaryMask(VoxelGrid::new(
            grid.dims(),
            grid.spacing(),
            grid.origin(),
            grid.direction(),
            VoxelData::Label(data),
        )?))
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.0
    }

    pub fn into_grid(self) -> VoxelGrid {
        self.0
    }

    pub fn dims(&self) -> [usize; 3] {
        self.0.dims()
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.0.spacing()
    }

    pub fn values(&self) -> &[i32] {
        self.0.as_label().expect("mask data is always label")
    }

    pub fn foreground_count(&self) -> usize {
        self.values().iter().filter(|&&v| v != 0).count()
    }
}

pub(crate) fn check_same_dims(a: [usize; 3], b: [usize; 3]) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch { left: a, right: b });
    }
    Ok(())
}
