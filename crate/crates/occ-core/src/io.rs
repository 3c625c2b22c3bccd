//! Binary containers and the frame manifest.
//!
//! Two little-endian formats carry every array the pipeline exchanges:
//!
//! Tensor container (`.occt`):
//! ```text
//! magic   4 bytes  "OCCT"
//! version u32      1
//! dtype   u32      0 = u8, 1 = u16, 2 = u32, 3 = f32, 4 = f64
//! ndim    u32
//! dims    ndim × u64
//! payload product(dims) × dtype size, row-major, last dim fastest
//! ```
//!
//! Grid container (`.occg`):
//! ```text
//! magic      4 bytes  "OCCG"
//! version    u32      1
//! dims       3 × u32  (X, Y, Z)
//! voxel_size f32      meters
//! origin     3 × f32  meters
//! payload    X·Y·Z class-code bytes, linear order (x fastest)
//! ```
//!
//! Headers are validated bounds-first: payload size is checked against the
//! actual input length before any allocation, so fuzzed headers cannot
//! trigger over-reads or huge allocations.
//!
//! The manifest is line-oriented `key: value` text; see [`FrameManifest`].

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::types::{CameraIntrinsics, CameraPose, ClassCode, GridSpec, VoxelGrid};

pub const TENSOR_MAGIC: [u8; 4] = *b"OCCT";
pub const GRID_MAGIC: [u8; 4] = *b"OCCG";
pub const FORMAT_VERSION: u32 = 1;

/// Element type of a tensor payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    U8 = 0,
    U16 = 1,
    U32 = 2,
    F32 = 3,
    F64 = 4,
}

impl Dtype {
    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Dtype::U8),
            1 => Ok(Dtype::U16),
            2 => Ok(Dtype::U32),
            3 => Ok(Dtype::F32),
            4 => Ok(Dtype::F64),
            other => Err(Error::UnknownDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::U32 => 4,
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Typed tensor payload.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    U8(Vec<u8>),
    U16(Vec<u16>),
    U32(Vec<u32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> Dtype {
        match self {
            TensorData::U8(_) => Dtype::U8,
            TensorData::U16(_) => Dtype::U16,
            TensorData::U32(_) => Dtype::U32,
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::U8(v) => v.len(),
            TensorData::U16(v) => v.len(),
            TensorData::U32(v) => v.len(),
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// N-dimensional array with an explicit dtype, the unit of file exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<u64>,
    data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<u64>, data: TensorData) -> Result<Self> {
        let count = element_count(&dims)?;
        if count != data.len() as u64 {
            return Err(Error::LengthMismatch {
                expected: count,
                found: data.len() as u64,
            });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[u64] {
        &self.dims
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn element_count(&self) -> usize {
        self.data.len()
    }

    /// Lossless widening of any payload to f64 (u8/u16/u32/f32 are exact).
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            TensorData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::U16(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::U32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            TensorData::U8(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u32(&self) -> Option<&[u32]> {
        match &self.data {
            TensorData::U32(v) => Some(v),
            _ => None,
        }
    }
}

fn element_count(dims: &[u64]) -> Result<u64> {
    let mut count: u64 = 1;
    for &d in dims {
        count = count
            .checked_mul(d)
            .ok_or(Error::LengthMismatch {
                expected: u64::MAX,
                found: 0,
            })?;
    }
    Ok(count)
}

/// Bounds-checked little-endian reader over a byte slice.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(Error::Truncated { needed: n })?;
        if end > self.buf.len() {
            return Err(Error::Truncated {
                needed: end - self.buf.len(),
            });
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn check_magic(r: &mut Reader<'_>, expected: [u8; 4]) -> Result<()> {
    let found: [u8; 4] = r.take(4)?.try_into().unwrap();
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

fn check_version(r: &mut Reader<'_>) -> Result<()> {
    let v = r.u32()?;
    if v != FORMAT_VERSION {
        return Err(Error::VersionMismatch(v));
    }
    Ok(())
}

/// Parse a tensor from bytes; the payload length must match the header
/// exactly (no trailing bytes).
pub fn read_tensor_bytes(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(bytes);
    check_magic(&mut r, TENSOR_MAGIC)?;
    check_version(&mut r)?;
    let dtype = Dtype::from_code(r.u32()?)?;
    let ndim = r.u32()? as usize;
    let mut dims = Vec::new();
    for _ in 0..ndim {
        dims.push(r.u64()?);
    }
    let count = element_count(&dims)?;
    let payload_len = count
        .checked_mul(dtype.size() as u64)
        .ok_or(Error::LengthMismatch {
            expected: u64::MAX,
            found: r.remaining() as u64,
        })?;
    if payload_len != r.remaining() as u64 {
        return Err(Error::LengthMismatch {
            expected: payload_len,
            found: r.remaining() as u64,
        });
    }
    let payload = r.take(payload_len as usize)?;
    let data = match dtype {
        Dtype::U8 => TensorData::U8(payload.to_vec()),
        Dtype::U16 => TensorData::U16(
            payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::U32 => TensorData::U32(
            payload
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::F32 => TensorData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::F64 => TensorData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Tensor::new(dims, data)
}

pub fn write_tensor_bytes(tensor: &Tensor) -> Vec<u8> {
    let payload_len = tensor.element_count() * tensor.dtype().size();
    let mut out = Vec::with_capacity(24 + tensor.dims.len() * 8 + payload_len);
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensor.dtype() as u32).to_le_bytes());
    out.extend_from_slice(&(tensor.dims.len() as u32).to_le_bytes());
    for &d in &tensor.dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    match &tensor.data {
        TensorData::U8(v) => out.extend_from_slice(v),
        TensorData::U16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    read_tensor_bytes(&std::fs::read(path)?)
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    write_atomic(path, &write_tensor_bytes(tensor))
}

/// Parse a semantic grid from bytes, validating every label byte.
pub fn read_grid_bytes(bytes: &[u8]) -> Result<VoxelGrid<f32>> {
    let mut r = Reader::new(bytes);
    check_magic(&mut r, GRID_MAGIC)?;
    check_version(&mut r)?;
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let voxel_size = r.f32()?;
    let origin = Vec3::new(r.f32()?, r.f32()?, r.f32()?);
    let count = element_count(&[dims[0] as u64, dims[1] as u64, dims[2] as u64])?;
    if count != r.remaining() as u64 {
        return Err(Error::LengthMismatch {
            expected: count,
            found: r.remaining() as u64,
        });
    }
    let spec = GridSpec::new(origin, voxel_size, dims)?;
    let payload = r.take(count as usize)?;
    let labels = payload
        .iter()
        .map(|&b| ClassCode::from_u8(b))
        .collect::<Result<Vec<_>>>()?;
    VoxelGrid::new(spec, labels)
}

pub fn write_grid_bytes(grid: &VoxelGrid<f32>) -> Vec<u8> {
    let spec = &grid.spec;
    let mut out = Vec::with_capacity(36 + grid.labels().len());
    out.extend_from_slice(&GRID_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for d in spec.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&spec.voxel_size.to_le_bytes());
    for v in spec.origin.to_array() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(grid.labels().iter().map(|l| l.as_u8()));
    out
}

pub fn read_grid(path: &Path) -> Result<VoxelGrid<f32>> {
    read_grid_bytes(&std::fs::read(path)?)
}

pub fn write_grid(path: &Path, grid: &VoxelGrid<f32>) -> Result<()> {
    write_atomic(path, &write_grid_bytes(grid))
}

/// Write bytes to a temp file in the target directory, then rename into
/// place, so failures never leave partial outputs.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// One frame of a clip: camera and tensor-file paths.
#[derive(Debug, Clone)]
pub struct FrameEntry {
    pub intrinsics: CameraIntrinsics<f64>,
    pub pose: CameraPose<f64>,
    pub depth: PathBuf,
    pub mask: Option<PathBuf>,
    pub features: Option<PathBuf>,
}

/// Clip manifest: per-frame camera records and tensor paths, plus optional
/// clip-level voxel features and a ground-truth grid.
///
/// Text format, one `key: value` per line (`#` starts a comment):
/// ```text
/// version: 1
/// clip.voxel_features: features.occt
/// clip.grid: gt.occg
/// frame.0.camera: fx fy cx cy width height m00 m01 ... m33
/// frame.0.depth: depth0.occt
/// frame.0.mask: mask0.occt
/// frame.0.features: feat0.occt
/// ```
/// The camera record is fx fy cx cy width height followed by the 4×4
/// camera-to-world matrix in row-major order. Paths are relative to the
/// manifest location and must resolve at load time.
#[derive(Debug, Clone)]
pub struct FrameManifest {
    pub frames: Vec<FrameEntry>,
    pub voxel_features: Option<PathBuf>,
    pub grid: Option<PathBuf>,
}

struct FrameDraft {
    camera: Option<(CameraIntrinsics<f64>, CameraPose<f64>)>,
    depth: Option<PathBuf>,
    mask: Option<PathBuf>,
    features: Option<PathBuf>,
}

fn parse_camera_record(line: usize, value: &str) -> Result<(CameraIntrinsics<f64>, CameraPose<f64>)> {
    let nums: Vec<f64> = value
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::ManifestParse {
                line,
                message: format!("bad number {t:?}"),
            })
        })
        .collect::<Result<_>>()?;
    if nums.len() != 22 {
        return Err(Error::ManifestParse {
            line,
            message: format!("camera record needs 22 numbers, got {}", nums.len()),
        });
    }
    let dim = |v: f64| -> Result<u32> {
        if v.fract() == 0.0 && v >= 1.0 && v <= u32::MAX as f64 {
            Ok(v as u32)
        } else {
            Err(Error::ManifestParse {
                line,
                message: format!("image size {v} is not a positive integer"),
            })
        }
    };
    let intr = CameraIntrinsics::new(nums[0], nums[1], nums[2], nums[3], dim(nums[4])?, dim(nums[5])?)?;
    let mut m = [[0.0f64; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            m[r][c] = nums[6 + r * 4 + c];
        }
    }
    Ok((intr, CameraPose::from_matrix4(m)?))
}

fn resolve(base: &Path, raw: &str) -> Result<PathBuf> {
    let p = base.join(raw);
    if !p.exists() {
        return Err(Error::UnresolvablePath(p.display().to_string()));
    }
    Ok(p)
}

/// Load and validate a manifest; all referenced paths are resolved relative
/// to the manifest location and must exist.
pub fn load_manifest(path: &Path) -> Result<FrameManifest> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();

    let mut version: Option<u32> = None;
    let mut voxel_features = None;
    let mut grid = None;
    let mut drafts: BTreeMap<usize, FrameDraft> = BTreeMap::new();

    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once(':').ok_or_else(|| Error::ManifestParse {
            line: line_no,
            message: "expected `key: value`".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "version" => {
                let v = value.parse::<u32>().map_err(|_| Error::ManifestParse {
                    line: line_no,
                    message: format!("bad version {value:?}"),
                })?;
                if v != FORMAT_VERSION {
                    return Err(Error::VersionMismatch(v));
                }
                version = Some(v);
            }
            "clip.voxel_features" => voxel_features = Some(resolve(&base, value)?),
            "clip.grid" => grid = Some(resolve(&base, value)?),
            _ => {
                let rest = key.strip_prefix("frame.").ok_or_else(|| Error::ManifestParse {
                    line: line_no,
                    message: format!("unknown key {key:?}"),
                })?;
                let (idx, field) = rest.split_once('.').ok_or_else(|| Error::ManifestParse {
                    line: line_no,
                    message: format!("frame key needs an index and field: {key:?}"),
                })?;
                let idx: usize = idx.parse().map_err(|_| Error::ManifestParse {
                    line: line_no,
                    message: format!("bad frame index {idx:?}"),
                })?;
                let draft = drafts.entry(idx).or_insert(FrameDraft {
                    camera: None,
                    depth: None,
                    mask: None,
                    features: None,
                });
                match field {
                    "camera" => draft.camera = Some(parse_camera_record(line_no, value)?),
                    "depth" => draft.depth = Some(resolve(&base, value)?),
                    "mask" => draft.mask = Some(resolve(&base, value)?),
                    "features" => draft.features = Some(resolve(&base, value)?),
                    other => {
                        return Err(Error::ManifestParse {
                            line: line_no,
                            message: format!("unknown frame field {other:?}"),
                        })
                    }
                }
            }
        }
    }

    if version.is_none() {
        return Err(Error::ManifestParse {
            line: 0,
            message: "missing `version` record".into(),
        });
    }
    let mut frames = Vec::with_capacity(drafts.len());
    for (idx, draft) in drafts {
        let (intrinsics, pose) = draft.camera.ok_or_else(|| Error::ManifestParse {
            line: 0,
            message: format!("frame {idx} has no camera record"),
        })?;
        let depth = draft.depth.ok_or_else(|| Error::ManifestParse {
            line: 0,
            message: format!("frame {idx} has no depth record"),
        })?;
        frames.push(FrameEntry {
            intrinsics,
            pose,
            depth,
            mask: draft.mask,
            features: draft.features,
        });
    }
    Ok(FrameManifest {
        frames,
        voxel_features,
        grid,
    })
}

/// One frame's manifest record: camera, depth path, optional mask and
/// feature paths (relative to the manifest directory).
pub type ManifestFrame = (
    CameraIntrinsics<f64>,
    CameraPose<f64>,
    String,
    Option<String>,
    Option<String>,
);

/// Serialize a manifest with paths as given (callers pass paths relative to
/// the manifest directory).
pub fn manifest_text(
    frames: &[ManifestFrame],
    voxel_features: Option<&str>,
    grid: Option<&str>,
) -> String {
    let mut out = String::new();
    out.push_str(&format!("version: {FORMAT_VERSION}\n"));
    if let Some(vf) = voxel_features {
        out.push_str(&format!("clip.voxel_features: {vf}\n"));
    }
    if let Some(g) = grid {
        out.push_str(&format!("clip.grid: {g}\n"));
    }
    for (i, (intr, pose, depth, mask, features)) in frames.iter().enumerate() {
        let m = pose.to_matrix4();
        let mut cam = format!(
            "{} {} {} {} {} {}",
            intr.fx, intr.fy, intr.cx, intr.cy, intr.width, intr.height
        );
        for row in m {
            for v in row {
                cam.push_str(&format!(" {v}"));
            }
        }
        out.push_str(&format!("frame.{i}.camera: {cam}\n"));
        out.push_str(&format!("frame.{i}.depth: {depth}\n"));
        if let Some(mask) = mask {
            out.push_str(&format!("frame.{i}.mask: {mask}\n"));
        }
        if let Some(features) = features {
            out.push_str(&format!("frame.{i}.features: {features}\n"));
        }
    }
    out
}
