//! Domain types shared by the whole pipeline: cameras, depth maps, semantic
//! point clouds, class codes, and voxel grids.
//!
//! All types are immutable values after construction and validate their
//! invariants up front.

use crate::error::{Error, Result};
use crate::geom::{RigidTransform, Vec3};
use crate::scalar::{real, Real};

/// One-byte semantic class. 0 is free space, 1..=11 are the semantic
/// classes in canonical order, 255 marks unknown/unobserved.
#[repr(u8)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassCode {
    Free = 0,
    Ceiling = 1,
    Floor = 2,
    Wall = 3,
    Window = 4,
    Chair = 5,
    Bed = 6,
    Sofa = 7,
    Table = 8,
    Tvs = 9,
    Furniture = 10,
    Object = 11,
    Unknown = 255,
}

impl ClassCode {
    /// Number of semantic classes (excluding free and unknown).
    pub const SEMANTIC_COUNT: usize = 11;
    /// Total label space: free + 11 semantics + unknown.
    pub const TOTAL_COUNT: usize = 13;

    pub const SEMANTIC: [ClassCode; Self::SEMANTIC_COUNT] = [
        ClassCode::Ceiling,
        ClassCode::Floor,
        ClassCode::Wall,
        ClassCode::Window,
        ClassCode::Chair,
        ClassCode::Bed,
        ClassCode::Sofa,
        ClassCode::Table,
        ClassCode::Tvs,
        ClassCode::Furniture,
        ClassCode::Object,
    ];

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(ClassCode::Free),
            1 => Ok(ClassCode::Ceiling),
            2 => Ok(ClassCode::Floor),
            3 => Ok(ClassCode::Wall),
            4 => Ok(ClassCode::Window),
            5 => Ok(ClassCode::Chair),
            6 => Ok(ClassCode::Bed),
            7 => Ok(ClassCode::Sofa),
            8 => Ok(ClassCode::Table),
            9 => Ok(ClassCode::Tvs),
            10 => Ok(ClassCode::Furniture),
            11 => Ok(ClassCode::Object),
            255 => Ok(ClassCode::Unknown),
            other => Err(Error::InvalidClassCode(other)),
        }
    }

    #[inline]
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    /// True for the 11 semantic classes (not free, not unknown).
    #[inline]
    pub fn is_semantic(self) -> bool {
        let v = self as u8;
        (1..=11).contains(&v)
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassCode::Free => "free",
            ClassCode::Ceiling => "ceiling",
            ClassCode::Floor => "floor",
            ClassCode::Wall => "wall",
            ClassCode::Window => "window",
            ClassCode::Chair => "chair",
            ClassCode::Bed => "bed",
            ClassCode::Sofa => "sofa",
            ClassCode::Table => "table",
            ClassCode::Tvs => "tvs",
            ClassCode::Furniture => "furniture",
            ClassCode::Object => "object",
            ClassCode::Unknown => "unknown",
        }
    }
}

/// Pinhole camera intrinsics over integer pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Result<Self> {
        let finite = fx.is_finite() && fy.is_finite() && cx.is_finite() && cy.is_finite();
        if !finite {
            return Err(Error::InvalidParameter("non-finite intrinsics".into()));
        }
        if fx <= T::zero() || fy <= T::zero() {
            return Err(Error::InvalidParameter(
                "focal lengths must be positive".into(),
            ));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(
                "image size must be at least 1x1".into(),
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn cast<U: Real>(&self) -> CameraIntrinsics<U> {
        CameraIntrinsics {
            fx: U::from(self.fx).expect("scalar cast"),
            fy: U::from(self.fy).expect("scalar cast"),
            cx: U::from(self.cx).expect("scalar cast"),
            cy: U::from(self.cy).expect("scalar cast"),
            width: self.width,
            height: self.height,
        }
    }
}

/// Camera-to-world rigid transform. Camera axes: +x right, +y down,
/// +z forward.
pub type CameraPose<T> = RigidTransform<T>;

/// Per-pixel depth along the camera +z axis, row-major.
///
/// A pixel is valid iff its depth is finite and strictly positive; invalid
/// pixels are skipped by every downstream operation.
#[derive(Debug, Clone)]
pub struct DepthMap<T> {
    width: u32,
    height: u32,
    values: Vec<T>,
}

impl<T: Real> DepthMap<T> {
    pub fn new(width: u32, height: u32, values: Vec<T>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "depth map {width}x{height} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn at(&self, u: u32, v: u32) -> T {
        self.values[v as usize * self.width as usize + u as usize]
    }

    /// Finite and strictly positive.
    #[inline]
    pub fn is_valid(d: T) -> bool {
        d.is_finite() && d > T::zero()
    }
}

/// World-space points with per-point class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticPointCloud<T> {
    points: Vec<Vec3<T>>,
    labels: Vec<ClassCode>,
}

impl<T: Real> SemanticPointCloud<T> {
    pub fn new(points: Vec<Vec3<T>>, labels: Vec<ClassCode>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFiniteInput(format!("point {p:?}")));
        }
        Ok(Self { points, labels })
    }

    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    pub fn labels(&self) -> &[ClassCode] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec3<T>, ClassCode)> + '_ {
        self.points
            .iter()
            .copied()
            .zip(self.labels.iter().copied())
    }

    /// Component-wise (min, max) corners, `None` when empty.
    pub fn bounding_box(&self) -> Option<(Vec3<T>, Vec3<T>)> {
        let first = *self.points.first()?;
        let mut lo = first;
        let mut hi = first;
        for &p in &self.points[1..] {
            lo = lo.min_component_wise(p);
            hi = hi.max_component_wise(p);
        }
        Some((lo, hi))
    }

    pub fn bounding_diagonal(&self) -> T {
        match self.bounding_box() {
            Some((lo, hi)) => (hi - lo).norm(),
            None => T::zero(),
        }
    }

    /// Keep the points selected by `mask` (same length), preserving order.
    pub fn select(&self, mask: &[bool]) -> Self {
        debug_assert_eq!(mask.len(), self.len());
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (i, &keep) in mask.iter().enumerate() {
            if keep {
                points.push(self.points[i]);
                labels.push(self.labels[i]);
            }
        }
        Self { points, labels }
    }

    /// Concatenate clouds, preserving order.
    pub fn concat(clouds: &[Self]) -> Self {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for c in clouds {
            points.extend_from_slice(&c.points);
            labels.extend_from_slice(&c.labels);
        }
        Self { points, labels }
    }

    pub fn map_points(&self, f: impl Fn(Vec3<T>) -> Vec3<T>) -> Self {
        Self {
            points: self.points.iter().map(|&p| f(p)).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Metric placement of a dense voxel grid: origin corner, voxel edge length,
/// and voxel counts per axis.
///
/// Linear storage order is x-fastest: index = x + X·(y + Y·z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    pub origin: Vec3<T>,
    pub voxel_size: T,
    pub dims: [usize; 3],
}

impl<T: Real> GridSpec<T> {
    pub fn new(origin: Vec3<T>, voxel_size: T, dims: [usize; 3]) -> Result<Self> {
        if !origin.is_finite() || !voxel_size.is_finite() {
            return Err(Error::NonFiniteInput("grid spec".into()));
        }
        if voxel_size <= T::zero() {
            return Err(Error::InvalidParameter(
                "voxel_size must be positive".into(),
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter(
                "grid dims must be at least 1".into(),
            ));
        }
        dims[0]
            .checked_mul(dims[1])
            .and_then(|xy| xy.checked_mul(dims[2]))
            .ok_or_else(|| Error::InvalidParameter("grid dims overflow".into()))?;
        Ok(Self {
            origin,
            voxel_size,
            dims,
        })
    }

    /// Total voxel count N = X·Y·Z.
    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Linear index of voxel coords, x-fastest.
    pub fn linear_index(&self, v: [usize; 3]) -> Result<usize> {
        let [x, y, z] = v;
        let [dx, dy, dz] = self.dims;
        if x >= dx || y >= dy || z >= dz {
            return Err(Error::IndexOutOfGrid(x, y, z, dx, dy, dz));
        }
        Ok(x + dx * (y + dy * z))
    }

    /// Inverse of [`linear_index`](Self::linear_index).
    pub fn delinearize(&self, i: usize) -> Result<[usize; 3]> {
        let n = self.voxel_count();
        if i >= n {
            return Err(Error::LinearIndexOutOfRange { index: i, count: n });
        }
        let [dx, dy, _] = self.dims;
        Ok([i % dx, (i / dx) % dy, i / (dx * dy)])
    }

    /// Voxel containing a world point under half-open intervals
    /// [origin + c·s, origin + (c+1)·s); `None` when outside the grid.
    pub fn voxel_of_point(&self, p: Vec3<T>) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        let rel = (p - self.origin) / self.voxel_size;
        for (a, r) in rel.to_array().into_iter().enumerate() {
            let c = r.floor();
            let ci = c.to_i64()?;
            if ci < 0 || ci >= self.dims[a] as i64 {
                return None;
            }
            out[a] = ci as usize;
        }
        Some(out)
    }

    /// World-space center of a voxel.
    pub fn voxel_center(&self, v: [usize; 3]) -> Vec3<T> {
        let half = real::<T>(0.5);
        let offset = Vec3::new(
            (real::<T>(v[0] as f64) + half) * self.voxel_size,
            (real::<T>(v[1] as f64) + half) * self.voxel_size,
            (real::<T>(v[2] as f64) + half) * self.voxel_size,
        );
        self.origin + offset
    }

    /// Exact equality of origin, voxel size, and dims.
    pub fn same_layout(&self, other: &Self) -> bool {
        self == other
    }

    pub fn cast<U: Real>(&self) -> GridSpec<U> {
        GridSpec {
            origin: self.origin.cast(),
            voxel_size: U::from(self.voxel_size).expect("scalar cast"),
            dims: self.dims,
        }
    }
}

/// Dense semantic occupancy volume: one class code per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    pub spec: GridSpec<T>,
    labels: Vec<ClassCode>,
}

impl<T: Real> VoxelGrid<T> {
    pub fn new(spec: GridSpec<T>, labels: Vec<ClassCode>) -> Result<Self> {
        if labels.len() != spec.voxel_count() {
            return Err(Error::DimensionMismatch(format!(
                "grid needs {} labels, got {}",
                spec.voxel_count(),
                labels.len()
            )));
        }
        Ok(Self { spec, labels })
    }

    /// All-free grid.
    pub fn free(spec: GridSpec<T>) -> Self {
        let n = spec.voxel_count();
        Self {
            spec,
            labels: vec![ClassCode::Free; n],
        }
    }

    pub fn labels(&self) -> &[ClassCode] {
        &self.labels
    }

    pub fn label_at(&self, v: [usize; 3]) -> Result<ClassCode> {
        Ok(self.labels[self.spec.linear_index(v)?])
    }

    pub fn occupied_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_semantic()).count()
    }
}

/// Per-voxel feature matrix (N×D, row i = feature of voxel i).
#[derive(Debug, Clone)]
pub struct VoxelFeatures<T> {
    pub spec: GridSpec<T>,
    dim: usize,
    values: Vec<T>,
}

impl<T: Real> VoxelFeatures<T> {
    pub fn new(spec: GridSpec<T>, dim: usize, values: Vec<T>) -> Result<Self> {
        let expected = spec.voxel_count() * dim;
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "voxel features need {} values, got {}",
                expected,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("voxel features".into()));
        }
        Ok(Self { spec, dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}
