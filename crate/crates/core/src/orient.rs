//! Reorientation of volumes into the LAS anatomical convention.
//!
//! World coordinates follow the NIfTI RAS+ frame (+x right, +y anterior,
//! +z superior). LAS storage therefore means the first voxel axis runs
//! toward −x (left), the second toward +y, the third toward +z. Axes are
//! snapped to their dominant world component, then permuted and flipped;
//! every voxel keeps its world coordinate.

use crate::error::{Error, Result};
use crate::grid::{VoxelData, VoxelGrid};

const DOMINANCE_TIE: f64 = 1e-6;

/// Target sign per world axis for LAS: −x, +y, +z.
const LAS_SIGNS: [f64; 3] = [-1.0, 1.0, 1.0];

/// Dominant world axis of each direction column, with its sign.
fn dominant_axes(direction: &[[f64; 3]; 3]) -> Result<[(usize, f64); 3]> {
    let mut out = [(0usize, 1.0f64); 3];
    for c in 0..3 {
        let col = [direction[0][c], direction[1][c], direction[2][c]];
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| col[b].abs().partial_cmp(&col[a].abs()).unwrap());
        let (first, second) = (order[0], order[1]);
        if (col[first].abs() - col[second].abs()).abs() < DOMINANCE_TIE {
            return Err(Error::AmbiguousOrientation(format!(
                "direction column {c} has equal-magnitude components along world axes {first} and {second}"
            )));
        }
        out[c] = (first, col[first].signum());
    }
    let mut seen = [false; 3];
    for &(axis, _) in &out {
        if seen[axis] {
            return Err(Error::AmbiguousOrientation(
                "two voxel axes snap to the same world axis".into(),
            ));
        }
        seen[axis] = true;
    }
    Ok(out)
}

/// Reorient a grid so its voxel axes run Left, Anterior, Superior.
///
/// Idempotent; preserves the world coordinate of every voxel.
pub fn reorient_to_las(grid: &VoxelGrid) -> Result<VoxelGrid> {
    let direction = grid.direction();
    let dominant = dominant_axes(&direction)?;

    // source[a] = input voxel axis whose dominant world axis is `a`, plus
    // whether that axis must be flipped to match the LAS sign.
    let mut source = [(0usize, false); 3];
    for (in_axis, &(world_axis, sign)) in dominant.iter().enumerate() {
        source[world_axis] = (in_axis, sign != LAS_SIGNS[world_axis]);
    }

    let identity = source == [(0, false), (1, false), (2, false)];
    if identity {
        return Ok(grid.clone());
    }

    let in_dims = grid.dims();
    let in_spacing = grid.spacing();
    let mut out_dims = [0usize; 3];
    let mut out_spacing = [0f64; 3];
    let mut out_direction = [[0.0; 3]; 3];
    let mut corner = [0usize; 3]; // input voxel that becomes output (0,0,0)
    for a in 0..3 {
        let (j, flip) = source[a];
        out_dims[a] = in_dims[j];
        out_spacing[a] = in_spacing[j];
        let sign = if flip { -1.0 } else { 1.0 };
        for r in 0..3 {
            out_direction[r][a] = sign * direction[r][j];
        }
        corner[j] = if flip { in_dims[j] - 1 } else { 0 };
    }
    let out_origin = grid.world_coord(corner);

    let map_linear = |x: usize, y: usize, z: usize| -> usize {
        let out_idx = [x, y, z];
        let mut in_idx = [0usize; 3];
        for a in 0..3 {
            let (j, flip) = source[a];
            in_idx[j] = if flip {
                in_dims[j] - 1 - out_idx[a]
            } else {
                out_idx[a]
            };
        }
        in_idx[0] + in_dims[0] * (in_idx[1] + in_dims[1] * in_idx[2])
    };

    let data = match grid.data() {
        VoxelData::Scalar(values) => VoxelData::Scalar(permute(values, out_dims, map_linear)),
        VoxelData::Label(values) => VoxelData::Label(permute(values, out_dims, map_linear)),
    };

    VoxelGrid::new(out_dims, out_spacing, out_origin, out_direction, data)
}

fn permute<T: Copy>(
    values: &[T],
    out_dims: [usize; 3],
    map_linear: impl Fn(usize, usize, usize) -> usize,
) -> Vec<T> {
    let mut out = Vec::with_capacity(values.len());
    for z in 0..out_dims[2] {
        for y in 0..out_dims[1] {
            for x in 0..out_dims[0] {
                out.push(values[map_linear(x, y, z)]);
            }
        }
    }
    out
}
