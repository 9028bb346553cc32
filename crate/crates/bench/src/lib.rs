//! Shared fixture builders for the pipeline benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use datadiet_core::grid::{BinaryMask, VoxelGrid};
use datadiet_core::synth::{make_mask, Lesion, SynthSpec};

/// Lesion-like mask: a handful of balls, the realistic sparse case.
pub fn blob_mask(side: usize, seed: u64) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lesions = (0..5)
        .map(|_| {
            let radius = rng.random_range(side as f64 / 20.0..side as f64 / 8.0);
            Lesion::ball(
                [
                    rng.random_range(radius + 1.0..side as f64 - radius - 1.0),
                    rng.random_range(radius + 1.0..side as f64 - radius - 1.0),
                    rng.random_range(radius + 1.0..side as f64 - radius - 1.0),
                ],
                radius,
            )
        })
        .collect();
    make_mask(&SynthSpec::new([side; 3], [1.0; 3], lesions, seed)).unwrap()
}

/// Dense random mask: the worst case for run-based labeling.
pub fn noise_mask(side: usize, density: f64, seed: u64) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..side * side * side)
        .map(|_| i32::from(rng.random_bool(density)))
        .collect();
    BinaryMask::from_grid(VoxelGrid::label([side; 3], [1.0; 3], data).unwrap()).unwrap()
}

/// Probability volume derived from a mask, with a little jitter.
pub fn prob_from_mask(mask: &BinaryMask, seed: u64) -> VoxelGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = mask
        .values()
        .iter()
        .map(|&v| {
            let base: f32 = if v != 0 { 0.92 } else { 0.03 };
            (base + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0)
        })
        .collect();
    VoxelGrid::scalar(mask.dims(), mask.spacing(), data).unwrap()
}

pub fn smooth_scalar(side: usize) -> VoxelGrid {
    let mut data = vec![0.0f32; side * side * side];
    for z in 0..side {
        for y in 0..side {
            for x in 0..side {
                data[x + side * (y + side * z)] = ((x as f32 * 0.2).sin()
                    + (y as f32 * 0.15).cos()
                    + (z as f32 * 0.1).sin())
                    * 100.0;
            }
        }
    }
    VoxelGrid::scalar([side; 3], [1.0; 3], data).unwrap()
}
