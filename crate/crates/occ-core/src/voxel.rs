//! Semantic voxelization: bin labeled points into a grid histogram and vote
//! each voxel's class by largest point count.
//!
//! Voxel intervals are half-open; the single exception is a point lying
//! exactly on the grid's upper boundary along an axis, which is clamped into
//! the last voxel so that an `auto_spec` grid always contains its own
//! extreme point.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scalar::{real, Real};
use crate::types::{ClassCode, GridSpec, SemanticPointCloud, VoxelGrid};

/// Per-voxel class counts: slots 0..=11 for free + the semantic classes,
/// with unknown tallied separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    by_class: [u32; 12],
    unknown: u32,
}

impl ClassCounts {
    fn add(&mut self, label: ClassCode) {
        match label {
            ClassCode::Unknown => self.unknown += 1,
            other => self.by_class[other.as_u8() as usize] += 1,
        }
    }

    fn merge(&mut self, other: &Self) {
        for (a, b) in self.by_class.iter_mut().zip(other.by_class) {
            *a += b;
        }
        self.unknown += other.unknown;
    }

    pub fn count(&self, label: ClassCode) -> u32 {
        match label {
            ClassCode::Unknown => self.unknown,
            other => self.by_class[other.as_u8() as usize],
        }
    }

    pub fn total(&self) -> u64 {
        self.by_class.iter().map(|&c| c as u64).sum::<u64>() + self.unknown as u64
    }

    /// Majority class: largest semantic count (ties to the lowest code),
    /// unknown only when no semantic class has any count, free only when the
    /// voxel holds nothing but free-labeled points.
    fn vote(&self) -> ClassCode {
        let mut best: Option<(u8, u32)> = None;
        for code in 1..=11u8 {
            let c = self.by_class[code as usize];
            if c > 0 && best.map_or(true, |(_, bc)| c > bc) {
                best = Some((code, c));
            }
        }
        match best {
            Some((code, _)) => ClassCode::from_u8(code).expect("semantic code"),
            None if self.unknown > 0 => ClassCode::Unknown,
            None => ClassCode::Free,
        }
    }
}

/// Sparse per-voxel class histogram over one grid.
#[derive(Debug, Clone)]
pub struct VoxelHistogram<T> {
    spec: GridSpec<T>,
    counts: HashMap<usize, ClassCounts>,
    in_range: u64,
    dropped: u64,
}

impl<T: Real> VoxelHistogram<T> {
    pub fn empty(spec: GridSpec<T>) -> Self {
        Self {
            spec,
            counts: HashMap::new(),
            in_range: 0,
            dropped: 0,
        }
    }

    pub fn spec(&self) -> &GridSpec<T> {
        &self.spec
    }

    /// Occupied-voxel entries (unordered).
    pub fn entries(&self) -> impl Iterator<Item = (usize, &ClassCounts)> {
        self.counts.iter().map(|(&i, c)| (i, c))
    }

    pub fn occupied_voxels(&self) -> usize {
        self.counts.len()
    }

    /// Points binned into the grid.
    pub fn in_range_points(&self) -> u64 {
        self.in_range
    }

    /// Points outside the grid, ignored by the vote.
    pub fn dropped_points(&self) -> u64 {
        self.dropped
    }
}

/// Voxel coords of `p` with the upper-boundary clamp described in the module
/// docs; `None` when the point is outside the grid.
fn bin_point<T: Real>(spec: &GridSpec<T>, p: Vec3<T>) -> Option<[usize; 3]> {
    let rel = (p - spec.origin) / spec.voxel_size;
    let mut out = [0usize; 3];
    for (a, r) in rel.to_array().into_iter().enumerate() {
        let dim = spec.dims[a] as i64;
        let mut c = r.floor().to_i64()?;
        if c == dim && r == real::<T>(spec.dims[a] as f64) {
            c = dim - 1;
        }
        if c < 0 || c >= dim {
            return None;
        }
        out[a] = c as usize;
    }
    Some(out)
}

/// Bin every point of the cloud into a per-voxel class histogram.
///
/// Out-of-range points are counted in the dropped tally. Accumulation is
/// sharded over point ranges and merged, so results are identical at any
/// thread count.
pub fn accumulate<T: Real>(cloud: &SemanticPointCloud<T>, spec: &GridSpec<T>) -> VoxelHistogram<T> {
    const SHARD: usize = 1 << 16;
    let points = cloud.points();
    let labels = cloud.labels();
    if points.len() <= SHARD {
        return accumulate_range(spec, points, labels);
    }
    let shards: Vec<VoxelHistogram<T>> = points
        .par_chunks(SHARD)
        .zip(labels.par_chunks(SHARD))
        .map(|(p, l)| accumulate_range(spec, p, l))
        .collect();
    let mut it = shards.into_iter();
    let mut acc = it.next().expect("at least one shard");
    for shard in it {
        acc = merge(&acc, &shard).expect("shards share one spec");
    }
    acc
}

fn accumulate_range<T: Real>(
    spec: &GridSpec<T>,
    points: &[Vec3<T>],
    labels: &[ClassCode],
) -> VoxelHistogram<T> {
    let mut hist = VoxelHistogram::empty(*spec);
    for (&p, &label) in points.iter().zip(labels) {
        match bin_point(spec, p) {
            Some(coords) => {
                let idx = spec.linear_index(coords).expect("binned in range");
                hist.counts.entry(idx).or_default().add(label);
                hist.in_range += 1;
            }
            None => hist.dropped += 1,
        }
    }
    hist
}

/// Add two histograms over the same grid spec.
pub fn merge<T: Real>(a: &VoxelHistogram<T>, b: &VoxelHistogram<T>) -> Result<VoxelHistogram<T>> {
    if !a.spec.same_layout(&b.spec) {
        return Err(Error::SpecMismatch(
            "histograms cover different grids".into(),
        ));
    }
    let (big, small) = if a.counts.len() >= b.counts.len() {
        (a, b)
    } else {
        (b, a)
    };
    let mut out = big.clone();
    for (&idx, counts) in &small.counts {
        out.counts.entry(idx).or_default().merge(counts);
    }
    out.in_range = a.in_range + b.in_range;
    out.dropped = a.dropped + b.dropped;
    Ok(out)
}

/// Resolve the histogram into a dense grid by majority vote.
pub fn vote<T: Real>(hist: &VoxelHistogram<T>) -> VoxelGrid<T> {
    let mut labels = vec![ClassCode::Free; hist.spec.voxel_count()];
    for (&idx, counts) in &hist.counts {
        labels[idx] = counts.vote();
    }
    VoxelGrid::new(hist.spec, labels).expect("histogram indices fit the spec")
}

/// Grid spec anchored at the cloud minimum ("minimal coordinates" origin
/// convention) with just enough voxels to cover the extent.
pub fn auto_spec<T: Real>(cloud: &SemanticPointCloud<T>, voxel_size: T) -> Result<GridSpec<T>> {
    if voxel_size <= T::zero() || !voxel_size.is_finite() {
        return Err(Error::InvalidParameter(
            "voxel_size must be positive".into(),
        ));
    }
    let (lo, hi) = cloud.bounding_box().ok_or(Error::EmptyCloud)?;
    let extent = hi - lo;
    let mut dims = [0usize; 3];
    for (a, e) in extent.to_array().into_iter().enumerate() {
        let d = (e / voxel_size).ceil().to_usize().ok_or_else(|| {
            Error::InvalidParameter("cloud extent too large for voxel size".into())
        })?;
        dims[a] = d.max(1);
    }
    GridSpec::new(lo, voxel_size, dims)
}

/// Copy a grid into a different window of the same resolution; voxels of the
/// target with no source counterpart become unknown.
pub fn window_to_grid<T: Real>(grid: &VoxelGrid<T>, target: &GridSpec<T>) -> Result<VoxelGrid<T>> {
    let src = &grid.spec;
    if src.voxel_size != target.voxel_size {
        return Err(Error::SpecMismatch(format!(
            "voxel size mismatch: {} vs {}",
            src.voxel_size, target.voxel_size
        )));
    }
    let offset: Vec<i64> = (0..3)
        .map(|a| {
            let d = (target.origin.to_array()[a] - src.origin.to_array()[a]) / src.voxel_size;
            d.round().to_i64().unwrap_or(i64::MAX)
        })
        .collect();
    let mut labels = vec![ClassCode::Unknown; target.voxel_count()];
    let [tx, ty, _] = target.dims;
    labels
        .par_chunks_mut(tx * ty)
        .enumerate()
        .for_each(|(z, slab)| {
            for y in 0..ty {
                for x in 0..tx {
                    let sx = x as i64 + offset[0];
                    let sy = y as i64 + offset[1];
                    let sz = z as i64 + offset[2];
                    let inside = sx >= 0
                        && sy >= 0
                        && sz >= 0
                        && (sx as usize) < src.dims[0]
                        && (sy as usize) < src.dims[1]
                        && (sz as usize) < src.dims[2];
                    if inside {
                        let idx = src
                            .linear_index([sx as usize, sy as usize, sz as usize])
                            .expect("checked range");
                        slab[y * tx + x] = grid.labels()[idx];
                    }
                }
            }
        });
    debug_assert_eq!(labels.len(), target.voxel_count());
    VoxelGrid::new(*target, labels)
}
