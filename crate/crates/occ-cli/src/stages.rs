//! Shared helpers: tensor↔domain conversions, cloud pair files, grid-spec
//! resolution, and summary records.
//!
//! Point clouds travel between subcommands as a pair of tensor files sharing
//! a stem: `<stem>.points.occt` ([N, 3] f64) and `<stem>.labels.occt`
//! ([N] u8).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use occ_core::distill::{FeatureMap, LabelMap, PooledFeatures, SuperpixelPartition};
use occ_core::geom::Vec3;
use occ_core::io::{self, Tensor, TensorData};
use occ_core::lift::PixelVoxelMap;
use occ_core::types::{ClassCode, DepthMap, GridSpec, SemanticPointCloud, VoxelFeatures};

/// Sentinel for unmapped/unassigned entries in u32 tensors.
pub const NONE_U32: u32 = u32::MAX;

/// Print one line-oriented `key=value` summary record for a stage.
#[macro_export]
macro_rules! summary {
    ($stage:expr $(, $key:ident = $value:expr)* $(,)?) => {{
        print!("stage={}", $stage);
        $(print!(" {}={}", stringify!($key), $value);)*
        println!();
    }};
}

pub fn points_path(stem: &Path) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".points.occt");
    PathBuf::from(s)
}

pub fn labels_path(stem: &Path) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".labels.occt");
    PathBuf::from(s)
}

/// Validity sidecar for pooled-feature tensors: `foo.occt` → `foo.valid.occt`.
pub fn validity_path(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => path.with_extension(format!("valid.{ext}")),
        None => path.with_extension("valid"),
    }
}

pub fn save_cloud(stem: &Path, cloud: &SemanticPointCloud<f64>) -> Result<()> {
    let n = cloud.len() as u64;
    let mut coords = Vec::with_capacity(cloud.len() * 3);
    for p in cloud.points() {
        coords.extend_from_slice(&p.to_array());
    }
    let points = Tensor::new(vec![n, 3], TensorData::F64(coords))?;
    let labels = Tensor::new(
        vec![n],
        TensorData::U8(cloud.labels().iter().map(|l| l.as_u8()).collect()),
    )?;
    io::write_tensor(&points_path(stem), &points)?;
    io::write_tensor(&labels_path(stem), &labels)?;
    Ok(())
}

pub fn load_cloud(stem: &Path) -> Result<SemanticPointCloud<f64>> {
    let points = io::read_tensor(&points_path(stem))
        .with_context(|| format!("reading {}", points_path(stem).display()))?;
    let labels = io::read_tensor(&labels_path(stem))
        .with_context(|| format!("reading {}", labels_path(stem).display()))?;
    let dims = points.dims();
    if dims.len() != 2 || dims[1] != 3 {
        bail!("point tensor must be [N, 3], got {dims:?}");
    }
    let coords = points.to_f64_vec();
    let pts: Vec<Vec3<f64>> = coords
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0], c[1], c[2]))
        .collect();
    let label_bytes = labels
        .as_u8()
        .context("label tensor must be u8")?
        .iter()
        .map(|&b| ClassCode::from_u8(b))
        .collect::<occ_core::Result<Vec<_>>>()?;
    Ok(SemanticPointCloud::new(pts, label_bytes)?)
}

/// Depth tensor [H, W] (any numeric dtype, widened to f64).
pub fn depth_from_tensor(t: &Tensor) -> Result<DepthMap<f64>> {
    let dims = t.dims();
    if dims.len() != 2 {
        bail!("depth tensor must be [H, W], got {dims:?}");
    }
    Ok(DepthMap::new(
        dims[1] as u32,
        dims[0] as u32,
        t.to_f64_vec(),
    )?)
}

pub fn depth_to_tensor_f32(depth: &DepthMap<f64>) -> Result<Tensor> {
    Ok(Tensor::new(
        vec![depth.height() as u64, depth.width() as u64],
        TensorData::F32(depth.values().iter().map(|&v| v as f32).collect()),
    )?)
}

/// Region mask tensor [H, W]; the dtype's max value marks ignored pixels.
pub fn label_map_from_tensor(t: &Tensor) -> Result<LabelMap> {
    let dims = t.dims();
    if dims.len() != 2 {
        bail!("mask tensor must be [H, W], got {dims:?}");
    }
    let ids: Vec<Option<u32>> = match t.data() {
        TensorData::U8(v) => v
            .iter()
            .map(|&x| (x != u8::MAX).then_some(x as u32))
            .collect(),
        TensorData::U16(v) => v
            .iter()
            .map(|&x| (x != u16::MAX).then_some(x as u32))
            .collect(),
        TensorData::U32(v) => v.iter().map(|&x| (x != u32::MAX).then_some(x)).collect(),
        _ => bail!("mask tensor must be an unsigned integer dtype"),
    };
    Ok(LabelMap::new(dims[1] as u32, dims[0] as u32, ids)?)
}

pub fn label_map_to_tensor_u8(map: &LabelMap) -> Result<Tensor> {
    let bytes: Vec<u8> = map
        .ids()
        .iter()
        .map(|id| match id {
            Some(v) if *v < u8::MAX as u32 => *v as u8,
            Some(_) => u8::MAX,
            None => u8::MAX,
        })
        .collect();
    Ok(Tensor::new(
        vec![map.height() as u64, map.width() as u64],
        TensorData::U8(bytes),
    )?)
}

/// Feature map tensor [H, W, D].
pub fn feature_map_from_tensor(t: &Tensor) -> Result<FeatureMap<f64>> {
    let dims = t.dims();
    if dims.len() != 3 {
        bail!("feature tensor must be [H, W, D], got {dims:?}");
    }
    Ok(FeatureMap::new(
        dims[1] as u32,
        dims[0] as u32,
        dims[2] as usize,
        t.to_f64_vec(),
    )?)
}

/// Voxel feature tensor [N, D] over a known grid spec.
pub fn voxel_features_from_tensor(t: &Tensor, spec: GridSpec<f64>) -> Result<VoxelFeatures<f64>> {
    let dims = t.dims();
    if dims.len() != 2 {
        bail!("voxel feature tensor must be [N, D], got {dims:?}");
    }
    if dims[0] as usize != spec.voxel_count() {
        bail!(
            "voxel features cover {} voxels but the grid has {}",
            dims[0],
            spec.voxel_count()
        );
    }
    Ok(VoxelFeatures::new(spec, dims[1] as usize, t.to_f64_vec())?)
}

/// Partition tensor [H, W] u32 with `NONE_U32` for unassigned pixels.
pub fn partition_from_tensor(t: &Tensor) -> Result<SuperpixelPartition> {
    let dims = t.dims();
    if dims.len() != 2 {
        bail!("partition tensor must be [H, W], got {dims:?}");
    }
    let raw = t.as_u32().context("partition tensor must be u32")?;
    let indices: Vec<Option<u32>> = raw.iter().map(|&v| (v != NONE_U32).then_some(v)).collect();
    Ok(SuperpixelPartition::from_indices(
        dims[1] as u32,
        dims[0] as u32,
        indices,
    )?)
}

pub fn partition_to_tensor(part: &SuperpixelPartition) -> Result<Tensor> {
    let raw: Vec<u32> = part.indices().iter().map(|q| q.unwrap_or(NONE_U32)).collect();
    Ok(Tensor::new(
        vec![part.height() as u64, part.width() as u64],
        TensorData::U32(raw),
    )?)
}

/// Pixel→voxel map tensor [H, W] u32 with `NONE_U32` for unmapped pixels.
pub fn map_from_tensor(t: &Tensor, spec: GridSpec<f64>) -> Result<PixelVoxelMap<f64>> {
    let dims = t.dims();
    if dims.len() != 2 {
        bail!("pixel map tensor must be [H, W], got {dims:?}");
    }
    let raw = t.as_u32().context("pixel map tensor must be u32")?;
    let entries: Vec<Option<usize>> = raw
        .iter()
        .map(|&v| (v != NONE_U32).then_some(v as usize))
        .collect();
    Ok(PixelVoxelMap::from_entries(
        spec,
        dims[1] as u32,
        dims[0] as u32,
        entries,
    )?)
}

pub fn map_to_tensor(map: &PixelVoxelMap<f64>) -> Result<Tensor> {
    if map.spec().voxel_count() >= NONE_U32 as usize {
        bail!("grid too large for the u32 pixel-map encoding");
    }
    let raw: Vec<u32> = map
        .entries()
        .iter()
        .map(|e| e.map(|v| v as u32).unwrap_or(NONE_U32))
        .collect();
    Ok(Tensor::new(
        vec![map.height() as u64, map.width() as u64],
        TensorData::U32(raw),
    )?)
}

pub fn pooled_to_tensors(pooled: &PooledFeatures<f64>) -> Result<(Tensor, Tensor)> {
    let values = Tensor::new(
        vec![pooled.count() as u64, pooled.dim() as u64],
        TensorData::F64(pooled.values().to_vec()),
    )?;
    let valid = Tensor::new(
        vec![pooled.count() as u64],
        TensorData::U8(pooled.valid_flags().iter().map(|&v| v as u8).collect()),
    )?;
    Ok((values, valid))
}

/// Read pooled features; the validity sidecar is optional (all rows valid
/// when absent).
pub fn pooled_from_files(path: &Path) -> Result<PooledFeatures<f64>> {
    let t = io::read_tensor(path).with_context(|| format!("reading {}", path.display()))?;
    let dims = t.dims();
    if dims.len() != 2 {
        bail!("pooled feature tensor must be [Q, D], got {dims:?}");
    }
    let (q, d) = (dims[0] as usize, dims[1] as usize);
    let sidecar = validity_path(path);
    let valid = if sidecar.exists() {
        let vt = io::read_tensor(&sidecar)?;
        let bytes = vt.as_u8().context("validity tensor must be u8")?;
        if bytes.len() != q {
            bail!("validity sidecar has {} rows, expected {q}", bytes.len());
        }
        bytes.iter().map(|&b| b != 0).collect()
    } else {
        vec![true; q]
    };
    Ok(PooledFeatures::new(q, d, t.to_f64_vec(), valid)?)
}

/// Grid-spec source: an existing grid file or explicit flags.
pub struct SpecArgs {
    pub spec_from: Option<PathBuf>,
    pub voxel_size: f64,
    pub dims: Option<String>,
    pub origin: Option<String>,
}

pub fn parse_triple_usize(s: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().context("bad dims"))
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        bail!("expected X,Y,Z, got {s:?}");
    }
    Ok([parts[0], parts[1], parts[2]])
}

pub fn parse_triple_f64(s: &str) -> Result<Vec3<f64>> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().context("bad coordinate"))
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        bail!("expected x,y,z, got {s:?}");
    }
    Ok(Vec3::new(parts[0], parts[1], parts[2]))
}

impl SpecArgs {
    /// Resolve to a concrete spec. Priority: `--spec-from` file, then
    /// explicit `--dims`/`--origin` flags.
    pub fn resolve(&self) -> Result<GridSpec<f64>> {
        if let Some(path) = &self.spec_from {
            let grid = io::read_grid(path)
                .with_context(|| format!("reading grid spec from {}", path.display()))?;
            return Ok(grid.spec.cast::<f64>());
        }
        let dims = parse_triple_usize(self.dims.as_deref().unwrap_or("60,60,36"))?;
        let origin = match &self.origin {
            Some(s) => parse_triple_f64(s)?,
            None => bail!("need --origin x,y,z (or --spec-from FILE)"),
        };
        Ok(GridSpec::new(origin, self.voxel_size, dims)?)
    }
}

/// Convert a pipeline grid (f64 spec) to the f32 on-disk representation.
pub fn grid_to_f32(grid: &occ_core::types::VoxelGrid<f64>) -> occ_core::types::VoxelGrid<f32> {
    occ_core::types::VoxelGrid::new(grid.spec.cast::<f32>(), grid.labels().to_vec())
        .expect("label count unchanged by spec cast")
}
