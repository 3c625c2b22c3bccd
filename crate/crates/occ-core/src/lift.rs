//! Back-projection of depth pixels into world space and the per-frame
//! pixel→voxel index map.
//!
//! Pixel (u, v) denotes the pixel center at integer coordinates (no +0.5
//! offset), matching intrinsics calibrated on integer pixel indices. A valid
//! pixel with depth d lifts to the camera-frame point
//! (d·(u−cx)/fx, d·(v−cy)/fy, d) and then through the camera-to-world pose.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scalar::Real;
use crate::types::{
    CameraIntrinsics, CameraPose, ClassCode, DepthMap, GridSpec, SemanticPointCloud,
};

/// Per-pixel mapping onto linear voxel indices of one grid; pixels whose
/// lifted point misses the grid (or has invalid depth) are unmapped.
#[derive(Debug, Clone)]
pub struct PixelVoxelMap<T> {
    spec: GridSpec<T>,
    width: u32,
    height: u32,
    entries: Vec<Option<usize>>,
}

impl<T: Real> PixelVoxelMap<T> {
    pub fn spec(&self) -> &GridSpec<T> {
        &self.spec
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major per-pixel entries.
    pub fn entries(&self) -> &[Option<usize>] {
        &self.entries
    }

    #[inline]
    pub fn at(&self, u: u32, v: u32) -> Option<usize> {
        self.entries[v as usize * self.width as usize + u as usize]
    }

    pub fn mapped_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    /// Rebuild from raw entries, validating every index against the spec.
    pub fn from_entries(
        spec: GridSpec<T>,
        width: u32,
        height: u32,
        entries: Vec<Option<usize>>,
    ) -> Result<Self> {
        if entries.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "pixel map {width}x{height} needs {} entries, got {}",
                width as usize * height as usize,
                entries.len()
            )));
        }
        let n = spec.voxel_count();
        if let Some(bad) = entries.iter().flatten().find(|&&i| i >= n) {
            return Err(Error::LinearIndexOutOfRange {
                index: *bad,
                count: n,
            });
        }
        Ok(Self {
            spec,
            width,
            height,
            entries,
        })
    }
}

fn check_dims<T: Real>(depth: &DepthMap<T>, intr: &CameraIntrinsics<T>) -> Result<()> {
    if depth.width() != intr.width || depth.height() != intr.height {
        return Err(Error::DimensionMismatch(format!(
            "depth map {}x{} vs intrinsics {}x{}",
            depth.width(),
            depth.height(),
            intr.width,
            intr.height
        )));
    }
    Ok(())
}

/// World point of pixel (u, v) at depth `d`: the pinhole back-projection
/// every lift operation uses.
#[inline]
pub fn pixel_to_world<T: Real>(
    u: u32,
    v: u32,
    d: T,
    intr: &CameraIntrinsics<T>,
    pose: &CameraPose<T>,
) -> Vec3<T> {
    let u = T::from(u).expect("pixel coord") - intr.cx;
    let v = T::from(v).expect("pixel coord") - intr.cy;
    let cam = Vec3::new(d * u / intr.fx, d * v / intr.fy, d);
    pose.apply(cam)
}

/// Lift every valid pixel into a world-space point cloud.
///
/// Output order is row-major pixel order restricted to valid pixels; labels
/// are all [`ClassCode::Unknown`] (semantics are attached elsewhere).
pub fn backproject<T: Real>(
    depth: &DepthMap<T>,
    intr: &CameraIntrinsics<T>,
    pose: &CameraPose<T>,
) -> Result<SemanticPointCloud<T>> {
    check_dims(depth, intr)?;
    let rows: Vec<Vec<Vec3<T>>> = (0..depth.height())
        .into_par_iter()
        .map(|v| {
            let mut row = Vec::new();
            for u in 0..depth.width() {
                let d = depth.at(u, v);
                if DepthMap::is_valid(d) {
                    row.push(pixel_to_world(u, v, d, intr, pose));
                }
            }
            row
        })
        .collect();
    let points: Vec<Vec3<T>> = rows.into_iter().flatten().collect();
    let labels = vec![ClassCode::Unknown; points.len()];
    SemanticPointCloud::new(points, labels)
}

/// Build the pixel→voxel map: each valid pixel is lifted to world space and
/// binned into `spec` under half-open voxel intervals.
pub fn build_pixel_voxel_map<T: Real>(
    depth: &DepthMap<T>,
    intr: &CameraIntrinsics<T>,
    pose: &CameraPose<T>,
    spec: &GridSpec<T>,
) -> Result<PixelVoxelMap<T>> {
    check_dims(depth, intr)?;
    let rows: Vec<Vec<Option<usize>>> = (0..depth.height())
        .into_par_iter()
        .map(|v| {
            let mut row = Vec::with_capacity(depth.width() as usize);
            for u in 0..depth.width() {
                let d = depth.at(u, v);
                let entry = if DepthMap::is_valid(d) {
                    spec.voxel_of_point(pixel_to_world(u, v, d, intr, pose))
                        .map(|c| spec.linear_index(c).expect("in-range voxel"))
                } else {
                    None
                };
                row.push(entry);
            }
            row
        })
        .collect();
    Ok(PixelVoxelMap {
        spec: *spec,
        width: depth.width(),
        height: depth.height(),
        entries: rows.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Mat3;

    fn intr(fx: f64, fy: f64, cx: f64, cy: f64, w: u32, h: u32) -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(fx, fy, cx, cy, w, h).unwrap()
    }

    #[test]
    fn principal_ray_lifts_straight_ahead() {
        let intr = intr(100.0, 100.0, 2.0, 1.0, 5, 3);
        let mut values = vec![0.0; 15];
        values[1 * 5 + 2] = 1.0; // pixel (cx, cy)
        let depth = DepthMap::new(5, 3, values).unwrap();
        let cloud = backproject(&depth, &intr, &CameraPose::identity()).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.points()[0], Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(cloud.labels()[0], ClassCode::Unknown);
    }

    #[test]
    fn zero_depth_produces_no_point() {
        let intr = intr(100.0, 100.0, 1.0, 1.0, 3, 3);
        let depth = DepthMap::new(3, 3, vec![0.0; 9]).unwrap();
        let cloud = backproject(&depth, &intr, &CameraPose::identity()).unwrap();
        assert!(cloud.is_empty());
    }

    #[test]
    fn offset_pixel_follows_pinhole_formula() {
        // Pixel at (cx + fx, cy) with depth 2 lifts to (2, 0, 2).
        let fx = 10.0;
        let intr = intr(fx, 10.0, 1.0, 1.0, 12, 3);
        let mut values = vec![0.0; 36];
        values[1 * 12 + 11] = 2.0; // u = cx + fx = 11
        let depth = DepthMap::new(12, 3, values).unwrap();
        let cloud = backproject(&depth, &intr, &CameraPose::identity()).unwrap();
        assert_eq!(cloud.points(), &[Vec3::new(2.0, 0.0, 2.0)]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let intr = intr(10.0, 10.0, 1.0, 1.0, 4, 4);
        let depth = DepthMap::new(3, 3, vec![1.0; 9]).unwrap();
        assert!(backproject(&depth, &intr, &CameraPose::identity()).is_err());
    }

    #[test]
    fn map_principal_pixel_close_depth() {
        // d = 0.1 at the principal pixel, origin 0, size 0.08: z cell = floor(1.25) = 1.
        let intr = intr(50.0, 50.0, 1.0, 1.0, 3, 3);
        let mut values = vec![0.0; 9];
        values[1 * 3 + 1] = 0.1;
        let depth = DepthMap::new(3, 3, values).unwrap();
        let spec = GridSpec::new(Vec3::zero(), 0.08, [4, 4, 4]).unwrap();
        let map =
            build_pixel_voxel_map(&depth, &intr, &CameraPose::identity(), &spec).unwrap();
        let expected = spec.linear_index([0, 0, 1]).unwrap();
        assert_eq!(map.at(1, 1), Some(expected));
        assert_eq!(map.mapped_count(), 1);
    }

    #[test]
    fn out_of_grid_pixels_are_unmapped() {
        let intr = intr(50.0, 50.0, 1.0, 1.0, 3, 3);
        let depth = DepthMap::new(3, 3, vec![100.0; 9]).unwrap();
        let spec = GridSpec::new(Vec3::zero(), 0.08, [4, 4, 4]).unwrap();
        let map =
            build_pixel_voxel_map(&depth, &intr, &CameraPose::identity(), &spec).unwrap();
        assert_eq!(map.mapped_count(), 0);
    }

    #[test]
    fn invalid_depth_map_is_fully_unmapped() {
        let intr = intr(50.0, 50.0, 1.0, 1.0, 3, 3);
        let depth = DepthMap::new(3, 3, vec![f64::NAN; 9]).unwrap();
        let spec = GridSpec::new(Vec3::zero(), 0.08, [4, 4, 4]).unwrap();
        let map =
            build_pixel_voxel_map(&depth, &intr, &CameraPose::identity(), &spec).unwrap();
        assert!(map.entries().iter().all(|e| e.is_none()));
    }

    #[test]
    fn map_is_invariant_under_joint_translation() {
        // Dyadic world shift applied to both the pose and the grid origin
        // leaves every entry unchanged (all arithmetic stays exact).
        let intr = intr(64.0, 64.0, 2.0, 2.0, 5, 5);
        let values: Vec<f64> = (0..25).map(|i| 1.0 + (i % 7) as f64 * 0.25).collect();
        let depth = DepthMap::new(5, 5, values).unwrap();
        let spec = GridSpec::new(Vec3::new(-1.0, -1.0, 0.0), 0.25, [8, 8, 8]).unwrap();
        let base =
            build_pixel_voxel_map(&depth, &intr, &CameraPose::identity(), &spec).unwrap();

        let shift = Vec3::new(3.5, -2.25, 1.75);
        let pose = CameraPose::new(Mat3::identity(), shift).unwrap();
        let shifted_spec = GridSpec::new(spec.origin + shift, 0.25, [8, 8, 8]).unwrap();
        let shifted = build_pixel_voxel_map(&depth, &intr, &pose, &shifted_spec).unwrap();
        assert_eq!(base.entries(), shifted.entries());
    }

    #[test]
    fn map_is_invariant_under_joint_quarter_turn() {
        // Rotate the world 90° about z: grid stays axis-aligned with permuted
        // dims, and every mapped voxel permutes coordinates accordingly. The
        // 1/256 origin offset keeps every lifted point (a multiple of 1/128)
        // strictly inside its cell, so the reflected half-open intervals
        // cannot disagree on boundary points.
        let intr = intr(64.0, 64.0, 2.0, 2.0, 5, 5);
        let values: Vec<f64> = (0..25).map(|i| 1.0 + (i % 5) as f64 * 0.5).collect();
        let depth = DepthMap::new(5, 5, values).unwrap();
        let off = -1.0 + 1.0 / 256.0;
        let spec = GridSpec::new(Vec3::new(off, off, -1.0), 0.25, [8, 10, 12]).unwrap();
        let base =
            build_pixel_voxel_map(&depth, &intr, &CameraPose::identity(), &spec).unwrap();

        // (x, y, z) -> (-y, x, z)
        let rot = Mat3::from_rows([0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let pose = CameraPose::new(rot, Vec3::zero()).unwrap();
        // The rotated grid's min corner on x comes from the original max on y.
        let rot_origin = Vec3::new(
            -(spec.origin.y + spec.voxel_size * spec.dims[1] as f64),
            spec.origin.x,
            spec.origin.z,
        );
        let rot_spec =
            GridSpec::new(rot_origin, 0.25, [spec.dims[1], spec.dims[0], spec.dims[2]]).unwrap();
        let rotated = build_pixel_voxel_map(&depth, &intr, &pose, &rot_spec).unwrap();

        for (a, b) in base.entries().iter().zip(rotated.entries()) {
            match (a, b) {
                (None, None) => {}
                (Some(i), Some(j)) => {
                    let [x, y, z] = spec.delinearize(*i).unwrap();
                    let [rx, ry, rz] = rot_spec.delinearize(*j).unwrap();
                    // x' = (dims_y - 1 - y), y' = x under this quarter turn.
                    assert_eq!([rx, ry, rz], [spec.dims[1] - 1 - y, x, z]);
                }
                other => panic!("mapped/unmapped mismatch: {other:?}"),
            }
        }
    }
}
