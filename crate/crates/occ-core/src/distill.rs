//! Region-level contrastive distillation machinery: superpixels from region
//! masks, supervoxel assignment through the pixel→voxel map, average-pooled
//! region features, and the temperature-scaled contrastive loss with its
//! analytic gradient.
//!
//! The loss treats matched superpixel/supervoxel feature rows as positive
//! pairs. With logits L_ij = ⟨f3d_i, f2d_j⟩/τ over valid rows, it sums
//! −log softmax_row_i(L)_ii across matched pairs (a sum, not a mean).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lift::PixelVoxelMap;
use crate::scalar::{pairwise_sum, real, Real};
use crate::types::{GridSpec, VoxelFeatures};

/// Per-pixel region identifiers (e.g. segmentation regions); `None` marks
/// ignored pixels.
#[derive(Debug, Clone)]
pub struct LabelMap {
    width: u32,
    height: u32,
    ids: Vec<Option<u32>>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32, ids: Vec<Option<u32>>) -> Result<Self> {
        if ids.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "label map {width}x{height} needs {} ids, got {}",
                width as usize * height as usize,
                ids.len()
            )));
        }
        Ok(Self { width, height, ids })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn ids(&self) -> &[Option<u32>] {
        &self.ids
    }

    #[inline]
    pub fn at(&self, u: u32, v: u32) -> Option<u32> {
        self.ids[v as usize * self.width as usize + u as usize]
    }
}

/// Dense pixel→superpixel partition; indices are 0..Q with every value used.
#[derive(Debug, Clone)]
pub struct SuperpixelPartition {
    width: u32,
    height: u32,
    indices: Vec<Option<u32>>,
    count: usize,
}

impl SuperpixelPartition {
    /// Validate raw per-pixel indices: they must be dense in 0..Q and every
    /// superpixel must own at least one pixel.
    pub fn from_indices(width: u32, height: u32, indices: Vec<Option<u32>>) -> Result<Self> {
        if indices.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "partition {width}x{height} needs {} entries, got {}",
                width as usize * height as usize,
                indices.len()
            )));
        }
        let count = indices
            .iter()
            .flatten()
            .map(|&q| q as usize + 1)
            .max()
            .unwrap_or(0);
        let mut seen = vec![false; count];
        for &q in indices.iter().flatten() {
            seen[q as usize] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidParameter(
                "superpixel indices are not dense".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            indices,
            count,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Superpixel count Q.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn indices(&self) -> &[Option<u32>] {
        &self.indices
    }
}

/// Per-voxel superpixel assignment over one grid.
#[derive(Debug, Clone)]
pub struct SupervoxelAssignment<T> {
    spec: GridSpec<T>,
    indices: Vec<Option<u32>>,
    superpixel_count: usize,
}

impl<T: Real> SupervoxelAssignment<T> {
    pub fn spec(&self) -> &GridSpec<T> {
        &self.spec
    }

    /// Per-voxel entries in linear voxel order.
    pub fn indices(&self) -> &[Option<u32>] {
        &self.indices
    }

    pub fn superpixel_count(&self) -> usize {
        self.superpixel_count
    }

    pub fn assigned_voxels(&self) -> usize {
        self.indices.iter().filter(|e| e.is_some()).count()
    }
}

/// Per-pixel D-dimensional features, row-major.
#[derive(Debug, Clone)]
pub struct FeatureMap<T> {
    width: u32,
    height: u32,
    dim: usize,
    values: Vec<T>,
}

impl<T: Real> FeatureMap<T> {
    pub fn new(width: u32, height: u32, dim: usize, values: Vec<T>) -> Result<Self> {
        let expected = width as usize * height as usize * dim;
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "feature map {width}x{height}x{dim} needs {expected} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("feature map".into()));
        }
        Ok(Self {
            width,
            height,
            dim,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pixel(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

/// Q×D pooled region features with a per-row validity flag; invalid rows are
/// zero-filled and excluded from the loss.
#[derive(Debug, Clone)]
pub struct PooledFeatures<T> {
    count: usize,
    dim: usize,
    values: Vec<T>,
    valid: Vec<bool>,
}

impl<T: Real> PooledFeatures<T> {
    pub fn new(count: usize, dim: usize, values: Vec<T>, valid: Vec<bool>) -> Result<Self> {
        if values.len() != count * dim || valid.len() != count {
            return Err(Error::DimensionMismatch(format!(
                "pooled features {count}x{dim}: got {} values, {} flags",
                values.len(),
                valid.len()
            )));
        }
        for (q, ok) in valid.iter().enumerate() {
            if *ok && values[q * dim..(q + 1) * dim].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput(format!("pooled row {q}")));
            }
        }
        Ok(Self {
            count,
            dim,
            values,
            valid,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, q: usize) -> &[T] {
        &self.values[q * self.dim..(q + 1) * self.dim]
    }

    pub fn is_valid(&self, q: usize) -> bool {
        self.valid[q]
    }

    pub fn valid_flags(&self) -> &[bool] {
        &self.valid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Group mask regions into superpixels.
///
/// With `split_components` off, each distinct region id becomes one
/// superpixel; with it on, each 4-connected component of a region id does.
/// Ignored pixels stay unassigned. Indices follow first-occurrence row-major
/// scan order.
pub fn superpixels_from_mask(mask: &LabelMap, split_components: bool) -> SuperpixelPartition {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut indices: Vec<Option<u32>> = vec![None; w * h];
    let mut next = 0u32;

    if !split_components {
        let mut by_id: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
        for (i, id) in mask.ids.iter().enumerate() {
            if let Some(id) = id {
                let q = *by_id.entry(*id).or_insert_with(|| {
                    let q = next;
                    next += 1;
                    q
                });
                indices[i] = Some(q);
            }
        }
    } else {
        let mut queue = std::collections::VecDeque::new();
        for start in 0..w * h {
            let Some(id) = mask.ids[start] else { continue };
            if indices[start].is_some() {
                continue;
            }
            let q = next;
            next += 1;
            indices[start] = Some(q);
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                let (x, y) = (i % w, i / w);
                let mut visit = |j: usize| {
                    if indices[j].is_none() && mask.ids[j] == Some(id) {
                        indices[j] = Some(q);
                        queue.push_back(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
        }
    }

    SuperpixelPartition {
        width: mask.width,
        height: mask.height,
        indices,
        count: next as usize,
    }
}

/// Pass superpixel indices to voxels through the pixel→voxel map by majority
/// vote; ties go to the lowest superpixel index, voxels that receive no
/// mapped pixel stay unassigned.
pub fn assign_supervoxels<T: Real>(
    part: &SuperpixelPartition,
    map: &PixelVoxelMap<T>,
) -> Result<SupervoxelAssignment<T>> {
    if part.width != map.width() || part.height != map.height() {
        return Err(Error::DimensionMismatch(format!(
            "partition {}x{} vs pixel map {}x{}",
            part.width,
            part.height,
            map.width(),
            map.height()
        )));
    }
    let mut tallies: std::collections::HashMap<usize, std::collections::HashMap<u32, u32>> =
        std::collections::HashMap::new();
    for (entry, q) in map.entries().iter().zip(&part.indices) {
        if let (Some(voxel), Some(q)) = (entry, q) {
            *tallies.entry(*voxel).or_default().entry(*q).or_insert(0) += 1;
        }
    }
    let mut indices = vec![None; map.spec().voxel_count()];
    for (voxel, votes) in tallies {
        let mut best: Option<(u32, u32)> = None; // (index, count)
        for (&q, &c) in &votes {
            let better = match best {
                None => true,
                Some((bq, bc)) => c > bc || (c == bc && q < bq),
            };
            if better {
                best = Some((q, c));
            }
        }
        indices[voxel] = best.map(|(q, _)| q);
    }
    Ok(SupervoxelAssignment {
        spec: *map.spec(),
        indices,
        superpixel_count: part.count,
    })
}

/// Average per-pixel features over each superpixel.
pub fn pool_superpixel_features<T: Real>(
    features: &FeatureMap<T>,
    part: &SuperpixelPartition,
) -> Result<PooledFeatures<T>> {
    if features.width != part.width || features.height != part.height {
        return Err(Error::DimensionMismatch(format!(
            "feature map {}x{} vs partition {}x{}",
            features.width, features.height, part.width, part.height
        )));
    }
    let (q_count, d) = (part.count, features.dim);
    let mut sums = vec![T::zero(); q_count * d];
    let mut members = vec![0u64; q_count];
    for (i, q) in part.indices.iter().enumerate() {
        let Some(q) = q else { continue };
        let q = *q as usize;
        let row = &mut sums[q * d..(q + 1) * d];
        for (acc, v) in row.iter_mut().zip(features.pixel(i)) {
            *acc = *acc + *v;
        }
        members[q] += 1;
    }
    finish_pool(q_count, d, sums, &members)
}

/// Average voxel feature rows over each supervoxel; superpixels with no
/// assigned voxel get an invalid row.
pub fn pool_supervoxel_features<T: Real>(
    vox: &VoxelFeatures<T>,
    assign: &SupervoxelAssignment<T>,
) -> Result<PooledFeatures<T>> {
    if !vox.spec.same_layout(assign.spec()) {
        return Err(Error::SpecMismatch(
            "voxel features and assignment cover different grids".into(),
        ));
    }
    let (q_count, d) = (assign.superpixel_count, vox.dim());
    let mut sums = vec![T::zero(); q_count * d];
    let mut members = vec![0u64; q_count];
    for (i, q) in assign.indices.iter().enumerate() {
        let Some(q) = q else { continue };
        let q = *q as usize;
        let row = &mut sums[q * d..(q + 1) * d];
        for (acc, v) in row.iter_mut().zip(vox.row(i)) {
            *acc = *acc + *v;
        }
        members[q] += 1;
    }
    finish_pool(q_count, d, sums, &members)
}

fn finish_pool<T: Real>(
    q_count: usize,
    d: usize,
    mut sums: Vec<T>,
    members: &[u64],
) -> Result<PooledFeatures<T>> {
    let mut valid = vec![false; q_count];
    for q in 0..q_count {
        if members[q] == 0 {
            for v in &mut sums[q * d..(q + 1) * d] {
                *v = T::zero();
            }
            continue;
        }
        valid[q] = true;
        let n = real::<T>(members[q] as f64);
        for v in &mut sums[q * d..(q + 1) * d] {
            *v = *v / n;
        }
    }
    PooledFeatures::new(q_count, d, sums, valid)
}

struct LossInputs<'a, T> {
    valid: Vec<usize>,
    f3d: &'a PooledFeatures<T>,
    /// Row L2 norms of f3d (only meaningful when normalizing).
    norms3d: Vec<T>,
    /// f2d rows, L2-normalized when requested.
    rows2d: Vec<T>,
}

fn prepare_loss<'a, T: Real>(
    f3d: &'a PooledFeatures<T>,
    f2d: &'a PooledFeatures<T>,
    tau: T,
    normalize: bool,
) -> Result<LossInputs<'a, T>> {
    if f3d.count != f2d.count || f3d.dim != f2d.dim {
        return Err(Error::DimensionMismatch(format!(
            "pooled features {}x{} vs {}x{}",
            f3d.count, f3d.dim, f2d.count, f2d.dim
        )));
    }
    if tau <= T::zero() || !tau.is_finite() {
        return Err(Error::InvalidParameter(
            "temperature must be positive and finite".into(),
        ));
    }
    let valid: Vec<usize> = (0..f3d.count)
        .filter(|&q| f3d.valid[q] && f2d.valid[q])
        .collect();
    if valid.is_empty() {
        return Err(Error::NoMatchedPairs);
    }
    for &q in &valid {
        if f3d.row(q).iter().chain(f2d.row(q)).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("pooled row {q}")));
        }
    }
    let d = f3d.dim;
    let mut norms3d = vec![T::one(); valid.len()];
    let mut rows2d = vec![T::zero(); valid.len() * d];
    for (vi, &q) in valid.iter().enumerate() {
        let row = f2d.row(q);
        let dst = &mut rows2d[vi * d..(vi + 1) * d];
        dst.copy_from_slice(row);
        if normalize {
            let n2 = dot(row, row).sqrt();
            if n2 <= T::zero() {
                return Err(Error::InvalidParameter(format!(
                    "cannot L2-normalize zero 2D row {q}"
                )));
            }
            for v in dst.iter_mut() {
                *v = *v / n2;
            }
            let n3 = dot(f3d.row(q), f3d.row(q)).sqrt();
            if n3 <= T::zero() {
                return Err(Error::InvalidParameter(format!(
                    "cannot L2-normalize zero 3D row {q}"
                )));
            }
            norms3d[vi] = n3;
        }
    }
    Ok(LossInputs {
        valid,
        f3d,
        norms3d,
        rows2d,
    })
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + *x * *y;
    }
    acc
}

/// Row of logits L_i· for valid row `vi`, plus a numerically stable
/// log-sum-exp of that row.
fn row_logits<T: Real>(inputs: &LossInputs<'_, T>, tau: T, normalize: bool, vi: usize) -> (Vec<T>, T) {
    let d = inputs.f3d.dim;
    let q = inputs.valid[vi];
    let mut anchor: Vec<T> = inputs.f3d.row(q).to_vec();
    if normalize {
        for v in anchor.iter_mut() {
            *v = *v / inputs.norms3d[vi];
        }
    }
    let m = inputs.valid.len();
    let mut logits = Vec::with_capacity(m);
    for vj in 0..m {
        let row2d = &inputs.rows2d[vj * d..(vj + 1) * d];
        logits.push(dot(&anchor, row2d) / tau);
    }
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let mut sum_exp = T::zero();
    for &l in &logits {
        sum_exp = sum_exp + (l - max).exp();
    }
    (logits, max + sum_exp.ln())
}

/// Contrastive distillation loss over matched superpixel/supervoxel rows.
///
/// Returns the loss (a sum over matched pairs) and the matched pair count.
/// With `normalize` set, rows are L2-normalized before the dot products.
pub fn contrastive_loss<T: Real>(
    f3d: &PooledFeatures<T>,
    f2d: &PooledFeatures<T>,
    tau: T,
    normalize: bool,
) -> Result<(T, usize)> {
    let inputs = prepare_loss(f3d, f2d, tau, normalize)?;
    let m = inputs.valid.len();
    let terms: Vec<T> = (0..m)
        .into_par_iter()
        .map(|vi| {
            let (logits, lse) = row_logits(&inputs, tau, normalize, vi);
            lse - logits[vi]
        })
        .collect();
    Ok((pairwise_sum(&terms), m))
}

/// Loss plus the analytic gradient ∂loss/∂f3d (Q×D, zero rows for pairs
/// excluded from the loss).
pub fn contrastive_loss_grad<T: Real>(
    f3d: &PooledFeatures<T>,
    f2d: &PooledFeatures<T>,
    tau: T,
    normalize: bool,
) -> Result<(T, Vec<T>, usize)> {
    let inputs = prepare_loss(f3d, f2d, tau, normalize)?;
    let m = inputs.valid.len();
    let d = f3d.dim;

    struct RowGrad<T> {
        term: T,
        grad: Vec<T>,
    }

    let rows: Vec<RowGrad<T>> = (0..m)
        .into_par_iter()
        .map(|vi| {
            let (logits, lse) = row_logits(&inputs, tau, normalize, vi);
            let term = lse - logits[vi];
            // w = Σ_j (p_ij − δ_ij) · f2d_j / τ in the (possibly normalized)
            // feature space.
            let mut w = vec![T::zero(); d];
            for vj in 0..m {
                let p = (logits[vj] - lse).exp();
                let coeff = if vj == vi { p - T::one() } else { p } / tau;
                let row2d = &inputs.rows2d[vj * d..(vj + 1) * d];
                for (acc, v) in w.iter_mut().zip(row2d) {
                    *acc = *acc + coeff * *v;
                }
            }
            if normalize {
                // Chain through u = x/|x|: grad = (w − u(u·w)) / |x|.
                let q = inputs.valid[vi];
                let norm = inputs.norms3d[vi];
                let u: Vec<T> = inputs.f3d.row(q).iter().map(|&x| x / norm).collect();
                let uw = dot(&u, &w);
                for (g, ui) in w.iter_mut().zip(&u) {
                    *g = (*g - *ui * uw) / norm;
                }
            }
            RowGrad { term, grad: w }
        })
        .collect();

    let mut grad = vec![T::zero(); f3d.count * d];
    for (vi, row) in rows.iter().enumerate() {
        let q = inputs.valid[vi];
        grad[q * d..(q + 1) * d].copy_from_slice(&row.grad);
    }
    let terms: Vec<T> = rows.iter().map(|r| r.term).collect();
    Ok((pairwise_sum(&terms), grad, m))
}
