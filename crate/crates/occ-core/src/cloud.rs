//! Point-cloud post-processing: outlier filters, floor-plane estimation,
//! z-up alignment, and metric scaling.
//!
//! The intended order is filter → align → scale; the transforms returned by
//! the last two stages compose to reproduce the final cloud from the raw one.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{rotation_between, Mat3, Vec3};
use crate::scalar::{real, Real};
use crate::spatial::{HashGrid, KdTree};
use crate::types::SemanticPointCloud;

/// Default wall height in meters used as the metric anchor.
pub const DEFAULT_WALL_HEIGHT: f64 = 2.8;

/// Plane in Hessian normal form: n·p + d = 0 with |n| = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane<T> {
    normal: Vec3<T>,
    offset: T,
}

impl<T: Real> Plane<T> {
    /// Normalizes the given normal; errors on (near-)zero normals.
    pub fn new(normal: Vec3<T>, offset: T) -> Result<Self> {
        if !normal.is_finite() || !offset.is_finite() {
            return Err(Error::NonFiniteInput("plane".into()));
        }
        let n = normal.norm();
        let unit = normal
            .normalized()
            .ok_or_else(|| Error::DegenerateGeometry("zero-length plane normal".into()))?;
        Ok(Self {
            normal: unit,
            offset: offset / n,
        })
    }

    pub fn normal(&self) -> Vec3<T> {
        self.normal
    }

    pub fn offset(&self) -> T {
        self.offset
    }

    /// Signed distance of a point (positive on the normal side).
    #[inline]
    pub fn signed_distance(&self, p: Vec3<T>) -> T {
        self.normal.dot(p) + self.offset
    }

    fn flipped(&self) -> Self {
        Self {
            normal: -self.normal,
            offset: -self.offset,
        }
    }

    /// Exact plane through three points; errors when they are collinear.
    pub fn through(a: Vec3<T>, b: Vec3<T>, c: Vec3<T>) -> Result<Self> {
        let n = (b - a).cross(c - a);
        let plane_n = n
            .normalized()
            .ok_or_else(|| Error::DegenerateGeometry("collinear points".into()))?;
        Ok(Self {
            normal: plane_n,
            offset: -plane_n.dot(a),
        })
    }
}

/// Rotation, translation, and uniform scale: p ↦ s·(R p) + t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
    pub scale: T,
}

impl<T: Real> SimilarityTransform<T> {
    pub fn new(rotation: Mat3<T>, translation: Vec3<T>, scale: T) -> Result<Self> {
        if scale <= T::zero() || !scale.is_finite() {
            return Err(Error::InvalidParameter("scale must be positive".into()));
        }
        let tol = real::<T>(crate::geom::RIGID_TOL);
        if rotation.orthonormality_error() > tol || (rotation.det() - T::one()).abs() > tol {
            return Err(Error::InvalidTransform(
                "similarity rotation must be a proper rotation".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
            scale,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
            scale: T::one(),
        }
    }

    pub fn uniform_scale(scale: T) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
            scale,
        }
    }

    #[inline]
    pub fn apply(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) * self.scale + self.translation
    }

    pub fn apply_cloud(&self, cloud: &SemanticPointCloud<T>) -> SemanticPointCloud<T> {
        cloud.map_points(|p| self.apply(p))
    }

    /// Composition `after ∘ before`: apply `before` first.
    pub fn compose(after: &Self, before: &Self) -> Self {
        Self {
            rotation: after.rotation.mul_mat(&before.rotation),
            translation: after.rotation.mul_vec(before.translation) * after.scale
                + after.translation,
            scale: after.scale * before.scale,
        }
    }
}

/// Keep points that have at least `min_neighbors` OTHER points within
/// `radius` (inclusive); order and labels are preserved.
pub fn radius_filter<T: Real>(
    cloud: &SemanticPointCloud<T>,
    radius: T,
    min_neighbors: usize,
) -> Result<SemanticPointCloud<T>> {
    if radius <= T::zero() || !radius.is_finite() {
        return Err(Error::InvalidParameter("radius must be positive".into()));
    }
    if min_neighbors == 0 {
        return Err(Error::InvalidParameter(
            "min_neighbors must be at least 1".into(),
        ));
    }
    if cloud.is_empty() {
        return Ok(SemanticPointCloud::empty());
    }
    let points = cloud.points();
    let grid = HashGrid::build(points, radius);
    let keep: Vec<bool> = (0..points.len())
        .into_par_iter()
        .map(|i| grid.neighbors_within(points, i) >= min_neighbors)
        .collect();
    Ok(cloud.select(&keep))
}

/// Mean distance to the k nearest OTHER points, for every point.
///
/// The k smallest squared distances are sorted ascending before the square
/// roots are summed, pinning one summation order for exact reproducibility.
fn mean_knn_distances<T: Real>(points: &[Vec3<T>], k: usize) -> Vec<T> {
    let tree = KdTree::build(points);
    let kf = real::<T>(k as f64);
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let d2 = tree.k_nearest_sq(points[i], i, k);
            debug_assert_eq!(d2.len(), k);
            let mut sum = T::zero();
            for v in d2 {
                sum = sum + v.sqrt();
            }
            sum / kf
        })
        .collect()
}

/// Remove points whose mean distance to their k nearest OTHER points exceeds
/// μ + std_ratio·σ, where μ and σ are the mean and population standard
/// deviation of those per-point means.
pub fn statistical_filter<T: Real>(
    cloud: &SemanticPointCloud<T>,
    k: usize,
    std_ratio: T,
) -> Result<SemanticPointCloud<T>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if std_ratio <= T::zero() || !std_ratio.is_finite() {
        return Err(Error::InvalidParameter(
            "std_ratio must be positive".into(),
        ));
    }
    if cloud.len() <= k {
        return Err(Error::InsufficientPoints(format!(
            "statistical filter needs more than k = {k} points, got {}",
            cloud.len()
        )));
    }
    let means = mean_knn_distances(cloud.points(), k);
    let n = real::<T>(means.len() as f64);
    let mu = means.iter().copied().fold(T::zero(), |a, b| a + b) / n;
    let var = means
        .iter()
        .map(|&m| (m - mu) * (m - mu))
        .fold(T::zero(), |a, b| a + b)
        / n;
    let threshold = mu + std_ratio * var.sqrt();
    let keep: Vec<bool> = means.iter().map(|&m| m <= threshold).collect();
    Ok(cloud.select(&keep))
}

/// Trial planes keep competing for the floor as long as they hold this
/// fraction of the best inlier count; a ceiling often collects several times
/// the floor's support, so the gate is deliberately permissive.
const DOMINANT_FRACTION: f64 = 0.3;

/// RANSAC floor-plane estimation.
///
/// Trials are seeded deterministically from `seed`; among the dominant
/// planes (inlier count within [`DOMINANT_FRACTION`] of the best) that are
/// within 45° of the up prior (+z of the input frame), the plane supported
/// by the lowest inliers wins, so a well-sampled ceiling cannot shadow the
/// floor. The returned normal is oriented so that most points lie on its
/// positive side.
///
/// The up prior requires the input cloud to be within 45° of upright; it is
/// the only gravity cue available without camera metadata.
pub fn estimate_floor_plane<T: Real>(
    cloud: &SemanticPointCloud<T>,
    iterations: usize,
    inlier_threshold: T,
    seed: u64,
) -> Result<Plane<T>> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    if iterations == 0 {
        return Err(Error::InvalidParameter(
            "iterations must be at least 1".into(),
        ));
    }
    if inlier_threshold <= T::zero() || !inlier_threshold.is_finite() {
        return Err(Error::InvalidParameter(
            "inlier threshold must be positive".into(),
        ));
    }
    let points = cloud.points();
    if points.len() < 3 {
        return Err(Error::InsufficientPoints(
            "plane fit needs at least 3 points".into(),
        ));
    }

    // Per-trial seeds drawn up front so trial evaluation order (and thread
    // count) cannot change the result.
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let trial_seeds: Vec<u64> = (0..iterations).map(|_| master.gen()).collect();

    struct Trial<T> {
        plane: Plane<T>,
        inliers: usize,
    }

    let trials: Vec<Option<Trial<T>>> = trial_seeds
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let n = points.len();
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n);
            while b == a {
                b = rng.gen_range(0..n);
            }
            let mut c = rng.gen_range(0..n);
            while c == a || c == b {
                c = rng.gen_range(0..n);
            }
            let plane = Plane::through(points[a], points[b], points[c]).ok()?;
            let inliers = points
                .iter()
                .filter(|&&p| plane.signed_distance(p).abs() <= inlier_threshold)
                .count();
            Some(Trial { plane, inliers })
        })
        .collect();

    let best_count = trials
        .iter()
        .flatten()
        .map(|t| t.inliers)
        .max()
        .ok_or_else(|| Error::DegenerateGeometry("all sampled triples collinear".into()))?;

    // Dominant candidates near-parallel to the up prior, scored by the mean
    // height of their inliers. The winner is the candidate with the most
    // inliers among those supported by the (near-)lowest points, so a tilted
    // sliver grazing the floor cannot beat the floor itself, and a
    // well-sampled ceiling is excluded outright by its height.
    let up = Vec3::<T>::axis(2);
    let dominant_floor = ((best_count as f64 * DOMINANT_FRACTION).ceil() as usize).max(3);
    let cos_gate = real::<T>(std::f64::consts::FRAC_1_SQRT_2);
    let family: Vec<(T, &Trial<T>)> = trials
        .par_iter()
        .flatten()
        .filter(|t| t.inliers >= dominant_floor && t.plane.normal.dot(up).abs() >= cos_gate)
        .map(|trial| {
            let mut height_sum = T::zero();
            let mut count = 0usize;
            for &p in points {
                if trial.plane.signed_distance(p).abs() <= inlier_threshold {
                    height_sum = height_sum + p.dot(up);
                    count += 1;
                }
            }
            (height_sum / real::<T>(count as f64), trial)
        })
        .collect();
    let plane = if family.is_empty() {
        // No dominant plane matches the up prior; fall back to the best
        // trial by inlier count (earliest trial on ties).
        trials
            .iter()
            .flatten()
            .fold(None::<&Trial<T>>, |acc, t| match acc {
                Some(best) if best.inliers >= t.inliers => Some(best),
                _ => Some(t),
            })
            .expect("at least one valid trial")
            .plane
    } else {
        let lowest = family
            .iter()
            .map(|(h, _)| *h)
            .fold(T::infinity(), |a, b| a.min(b));
        let slack = inlier_threshold + inlier_threshold;
        family
            .iter()
            .filter(|(h, _)| *h <= lowest + slack)
            .fold(None::<&Trial<T>>, |acc, (_, t)| match acc {
                Some(best) if best.inliers >= t.inliers => Some(best),
                _ => Some(t),
            })
            .expect("family is non-empty")
            .plane
    };

    // Orient the normal so most points lie on its positive side.
    let tol = inlier_threshold;
    let mut above = 0usize;
    let mut below = 0usize;
    for &p in points {
        let s = plane.signed_distance(p);
        if s > tol {
            above += 1;
        } else if s < -tol {
            below += 1;
        }
    }
    let oriented = if below > above { plane.flipped() } else { plane };

    // Re-anchor the offset on the inlier centroid.
    let mut centroid = Vec3::zero();
    let mut count = 0usize;
    for &p in points {
        if oriented.signed_distance(p).abs() <= inlier_threshold {
            centroid = centroid + p;
            count += 1;
        }
    }
    let centroid = centroid / real::<T>(count as f64);
    Ok(Plane {
        normal: oriented.normal,
        offset: -oriented.normal.dot(centroid),
    })
}

/// Rigidly move the cloud so the floor normal becomes +z and the floor sits
/// at z = 0. Returns the transformed cloud and the rigid transform (scale 1).
pub fn align_z_up<T: Real>(
    cloud: &SemanticPointCloud<T>,
    floor: &Plane<T>,
) -> Result<(SemanticPointCloud<T>, SimilarityTransform<T>)> {
    let rotation = rotation_between(floor.normal(), Vec3::axis(2));
    let translation = Vec3::new(T::zero(), T::zero(), floor.offset());
    let transform = SimilarityTransform::new(rotation, translation, T::one())?;
    Ok((transform.apply_cloud(cloud), transform))
}

/// 99th-percentile z by the nearest-rank rule; the ceiling-height estimate.
pub fn ceiling_height<T: Real>(cloud: &SemanticPointCloud<T>) -> Result<T> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut zs: Vec<T> = cloud.points().iter().map(|p| p.z).collect();
    zs.sort_by(|a, b| a.partial_cmp(b).expect("finite z"));
    let n = zs.len();
    let rank = ((n as f64) * 0.99).ceil() as usize;
    Ok(zs[rank.max(1) - 1])
}

/// Uniformly rescale a z-up cloud so the estimated ceiling height matches
/// `target_wall_height`. Returns the scaled cloud and the scale factor.
pub fn metric_scale<T: Real>(
    cloud: &SemanticPointCloud<T>,
    target_wall_height: T,
) -> Result<(SemanticPointCloud<T>, T)> {
    if target_wall_height <= T::zero() || !target_wall_height.is_finite() {
        return Err(Error::InvalidParameter(
            "target wall height must be positive".into(),
        ));
    }
    let h = ceiling_height(cloud)?;
    if h <= T::zero() {
        return Err(Error::DegenerateHeight(h.to_f64().unwrap_or(f64::NAN)));
    }
    let s = target_wall_height / h;
    Ok((cloud.map_points(|p| p * s), s))
}
