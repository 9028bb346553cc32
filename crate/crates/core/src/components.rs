//! Connected-component labeling of binary masks.
//!
//! Labeling is run-based: maximal x-runs of foreground become union-find
//! nodes, and runs on neighboring lines are merged according to the
//! connectivity. Final labels are assigned 1..K in raster-scan
//! first-encounter order, so the output is deterministic.

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, VoxelData, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// Face neighbors only.
    Six,
    /// Face and edge neighbors.
    Eighteen,
    /// Face, edge, and corner neighbors.
    TwentySix,
}

impl Connectivity {
    pub fn neighbor_count(self) -> u8 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    /// Offsets of the full neighborhood; used by the tests' flood-fill
    /// oracle and exposed for callers that need explicit stencils.
    pub fn offsets(self) -> Vec<[i32; 3]> {
        let mut out = Vec::with_capacity(26);
        for dz in -1i32..=1 {
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    let order = dx.abs() + dy.abs() + dz.abs();
                    if order == 0 {
                        continue;
                    }
                    let keep = match self {
                        Connectivity::Six => order == 1,
                        Connectivity::Eighteen => order <= 2,
                        Connectivity::TwentySix => true,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

impl std::str::FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "6" => Ok(Connectivity::Six),
            "18" => Ok(Connectivity::Eighteen),
            "26" => Ok(Connectivity::TwentySix),
            other => Err(Error::InvalidArgument(format!(
                "connectivity must be 6, 18, or 26, got {other:?}"
            ))),
        }
    }
}

/// Labels 1..K over the mask's grid; 0 is background.
#[derive(Debug, Clone)]
pub struct ComponentLabeling {
    pub labels: VoxelGrid,
    pub component_count: usize,
    /// Voxel count per component, indexed by label − 1.
    pub component_sizes: Vec<usize>,
}

/// A maximal x-run of foreground voxels; `x0..=x1` on one (y, z) line.
#[derive(Debug, Clone, Copy)]
struct Run {
    x0: u32,
    x1: u32,
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new() -> Self {
        UnionFind {
            parent: Vec::new(),
            size: Vec::new(),
        }
    }

    fn push(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.size.push(1);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grandparent = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grandparent;
            x = grandparent;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let mut ra = self.find(a);
        let mut rb = self.find(b);
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

/// Run decomposition plus the union-find over provisional run ids.
struct RunLabeling {
    dims: [usize; 3],
    /// (first run index, run count) per (y, z) line; runs of one line are
    /// contiguous and x-sorted in `runs`.
    lines: Vec<(u32, u32)>,
    runs: Vec<Run>,
    uf: UnionFind,
}

impl RunLabeling {
    fn build(mask: &BinaryMask, connectivity: Connectivity) -> Self {
        let dims = mask.dims();
        let values = mask.values();
        let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
        let mut lines = vec![(0u32, 0u32); ny * nz];
        let mut runs: Vec<Run> = Vec::new();
        let mut uf = UnionFind::new();

        // Previous lines to merge with, as (dy, dz, dilated).
        let neighbor_lines: &[(isize, isize, bool)] = match connectivity {
            Connectivity::Six => &[(-1, 0, false), (0, -1, false)],
            Connectivity::Eighteen => &[
                (-1, 0, true),
                (0, -1, true),
                (-1, -1, false),
                (1, -1, false),
            ],
            Connectivity::TwentySix => {
                &[(-1, 0, true), (0, -1, true), (-1, -1, true), (1, -1, true)]
            }
        };

        for z in 0..nz {
            for y in 0..ny {
                let line_index = y + ny * z;
                let base = nx * line_index;
                let row = &values[base..base + nx];
                let first_run = runs.len() as u32;

                let mut x = 0;
                while x < nx {
                    if row[x] == 0 {
                        x += 1;
                        continue;
                    }
                    let x0 = x;
                    while x < nx && row[x] != 0 {
                        x += 1;
                    }
                    let run_id = uf.push();
                    debug_assert_eq!(run_id as usize, runs.len());
                    let run = Run {
                        x0: x0 as u32,
                        x1: (x - 1) as u32,
                    };
                    runs.push(run);

                    for &(dy, dz, dilated) in neighbor_lines {
                        let (yy, zz) = (y as isize + dy, z as isize + dz);
                        if yy < 0 || zz < 0 || yy >= ny as isize || zz >= nz as isize {
                            continue;
                        }
                        let (start, count) = lines[yy as usize + ny * zz as usize];
                        merge_overlapping(&mut uf, &runs, run_id, run, start, count, dilated);
                    }
                }
                lines[line_index] = (first_run, runs.len() as u32 - first_run);
            }
        }

        RunLabeling {
            dims,
            lines,
            runs,
            uf,
        }
    }

    /// Final label per root, assigned in raster first-encounter order.
    /// Returns (labels by run, component sizes).
    fn assign_labels(&mut self) -> (Vec<u32>, Vec<usize>) {
        let mut label_of_root = vec![u32::MAX; self.runs.len()];
        let mut run_labels = vec![0u32; self.runs.len()];
        let mut sizes: Vec<usize> = Vec::new();
        let uf = &mut self.uf;
        for (i, (slot, run)) in run_labels.iter_mut().zip(&self.runs).enumerate() {
            let root = uf.find(i as u32) as usize;
            let label = if label_of_root[root] == u32::MAX {
                sizes.push(0);
                let fresh = sizes.len() as u32;
                label_of_root[root] = fresh;
                fresh
            } else {
                label_of_root[root]
            };
            *slot = label;
            sizes[(label - 1) as usize] += (run.x1 - run.x0 + 1) as usize;
        }
        (run_labels, sizes)
    }
}

fn merge_overlapping(
    uf: &mut UnionFind,
    runs: &[Run],
    run_id: u32,
    run: Run,
    start: u32,
    count: u32,
    dilated: bool,
) {
    let reach = u32::from(dilated);
    let lo = run.x0.saturating_sub(reach);
    let hi = run.x1 + reach;
    let line = &runs[start as usize..(start + count) as usize];
    // Runs on a line are disjoint and sorted, so x1 is increasing: binary
    // search for the first candidate that can reach x0.
    let first = line.partition_point(|r| r.x1 < lo);
    for (k, other) in line.iter().enumerate().skip(first) {
        if other.x0 > hi {
            break;
        }
        uf.union(run_id, start + k as u32);
    }
}

/// Label connected foreground components under the given connectivity.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabeling {
    let mut labeling = RunLabeling::build(mask, connectivity);
    let (run_labels, sizes) = labeling.assign_labels();

    let dims = labeling.dims;
    let nx = dims[0];
    let mut labels = vec![0i32; mask.grid().len()];
    for (line_index, &(start, count)) in labeling.lines.iter().enumerate() {
        let base = nx * line_index;
        for k in start..start + count {
            let run = labeling.runs[k as usize];
            let label = run_labels[k as usize] as i32;
            for v in &mut labels[base + run.x0 as usize..=base + run.x1 as usize] {
                *v = label;
            }
        }
    }

    let grid = VoxelGrid::new(
        dims,
        mask.grid().spacing(),
        mask.grid().origin(),
        mask.grid().direction(),
        VoxelData::Label(labels),
    )
    .expect("labeling preserves the mask's valid geometry");

    ComponentLabeling {
        labels: grid,
        component_count: sizes.len(),
        component_sizes: sizes,
    }
}

/// Per-component (size, overlap with `other`) in label order, without
/// materializing a label volume. `other` must be the same shape.
pub(crate) fn component_overlap_stats(
    mask: &BinaryMask,
    connectivity: Connectivity,
    other: &BinaryMask,
) -> Vec<(usize, usize)> {
    debug_assert_eq!(mask.dims(), other.dims());
    let mut labeling = RunLabeling::build(mask, connectivity);
    let (run_labels, sizes) = labeling.assign_labels();
    let other_values = other.values();
    let nx = labeling.dims[0];

    let mut overlap = vec![0usize; sizes.len()];
    for (line_index, &(start, count)) in labeling.lines.iter().enumerate() {
        let base = nx * line_index;
        for k in start..start + count {
            let run = labeling.runs[k as usize];
            let hits = other_values[base + run.x0 as usize..=base + run.x1 as usize]
                .iter()
                .filter(|&&v| v != 0)
                .count();
            overlap[(run_labels[k as usize] - 1) as usize] += hits;
        }
    }
    sizes.into_iter().zip(overlap).collect()
}
