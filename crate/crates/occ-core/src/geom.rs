//! Minimal 3D linear algebra: vectors, rotation matrices, rigid transforms.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// 3D vector / point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn splat(v: T) -> Self {
        Self::new(v, v, v)
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction; `None` for (near-)zero vectors.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n <= T::zero() || !n.is_finite() {
            None
        } else {
            Some(self / n)
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn min_component_wise(self, o: Self) -> Self {
        Self::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_component_wise(self, o: Self) -> Self {
        Self::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn axis(i: usize) -> Self {
        match i {
            0 => Self::new(T::one(), T::zero(), T::zero()),
            1 => Self::new(T::zero(), T::one(), T::zero()),
            _ => Self::new(T::zero(), T::zero(), T::one()),
        }
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(
            U::from(self.x).expect("scalar cast"),
            U::from(self.y).expect("scalar cast"),
            U::from(self.z).expect("scalar cast"),
        )
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// 3×3 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<T> {
    pub rows: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            rows: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn from_rows(r0: [T; 3], r1: [T; 3], r2: [T; 3]) -> Self {
        Self { rows: [r0, r1, r2] }
    }

    pub fn col(&self, j: usize) -> Vec3<T> {
        Vec3::new(self.rows[0][j], self.rows[1][j], self.rows[2][j])
    }

    pub fn row(&self, i: usize) -> Vec3<T> {
        Vec3::from_array(self.rows[i])
    }

    pub fn transpose(&self) -> Self {
        let r = &self.rows;
        Self::from_rows(
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        )
    }

    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        Vec3::new(
            self.row(0).dot(v),
            self.row(1).dot(v),
            self.row(2).dot(v),
        )
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut rows = [[T::zero(); 3]; 3];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.row(i).dot(o.col(j));
            }
        }
        Self { rows }
    }

    pub fn det(&self) -> T {
        let r = &self.rows;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    /// Rodrigues rotation about a unit axis.
    pub fn from_axis_angle(axis: Vec3<T>, angle: T) -> Self {
        let (s, c) = (angle.sin(), angle.cos());
        let t = T::one() - c;
        let (x, y, z) = (axis.x, axis.y, axis.z);
        Self::from_rows(
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        )
    }

    /// Max absolute deviation of RᵀR from the identity.
    pub fn orthonormality_error(&self) -> T {
        let gram = self.transpose().mul_mat(self);
        let id = Self::identity();
        let mut err = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                err = err.max((gram.rows[i][j] - id.rows[i][j]).abs());
            }
        }
        err
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Mat3<U> {
        let mut rows = [[U::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rows[i][j] = U::from(self.rows[i][j]).expect("scalar cast");
            }
        }
        Mat3 { rows }
    }
}

/// Proper rigid transform (rotation + translation), validated at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<T> {
    rotation: Mat3<T>,
    translation: Vec3<T>,
}

/// Tolerance for the orthonormality and determinant checks.
pub const RIGID_TOL: f64 = 1e-6;

impl<T: Real> RigidTransform<T> {
    pub fn new(rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self> {
        if !rotation.is_finite() || !translation.is_finite() {
            return Err(Error::InvalidTransform("non-finite entries".into()));
        }
        let tol = real::<T>(RIGID_TOL);
        let ortho = rotation.orthonormality_error();
        if ortho > tol {
            return Err(Error::InvalidTransform(format!(
                "rotation not orthonormal (error {ortho})"
            )));
        }
        let det = rotation.det();
        if (det - T::one()).abs() > tol {
            return Err(Error::InvalidTransform(format!(
                "rotation determinant {det} != +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
        }
    }

    /// Build from a 4×4 row-major matrix; the last row must be (0, 0, 0, 1).
    pub fn from_matrix4(m: [[T; 4]; 4]) -> Result<Self> {
        let tol = real::<T>(1e-9);
        let last_ok = m[3][0].abs() <= tol
            && m[3][1].abs() <= tol
            && m[3][2].abs() <= tol
            && (m[3][3] - T::one()).abs() <= tol;
        if !last_ok {
            return Err(Error::InvalidTransform(
                "last row of a rigid 4x4 must be (0, 0, 0, 1)".into(),
            ));
        }
        let rotation = Mat3::from_rows(
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        );
        let translation = Vec3::new(m[0][3], m[1][3], m[2][3]);
        Self::new(rotation, translation)
    }

    pub fn to_matrix4(&self) -> [[T; 4]; 4] {
        let r = &self.rotation.rows;
        let t = self.translation;
        let (z, o) = (T::zero(), T::one());
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [z, z, z, o],
        ]
    }

    pub fn rotation(&self) -> &Mat3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3<T> {
        self.translation
    }

    pub fn apply(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) + self.translation
    }

    /// Rotate a direction vector (no translation).
    pub fn rotate(&self, v: Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(v)
    }

    pub fn cast<U: Real>(&self) -> RigidTransform<U> {
        RigidTransform {
            rotation: self.rotation.cast(),
            translation: self.translation.cast(),
        }
    }
}

/// Minimal rotation taking unit vector `from` onto unit vector `to`.
///
/// Falls back to a 180° rotation about a perpendicular axis when the vectors
/// are opposed.
pub fn rotation_between<T: Real>(from: Vec3<T>, to: Vec3<T>) -> Mat3<T> {
    let eps = real::<T>(1e-12);
    let axis = from.cross(to);
    let s = axis.norm();
    let c = from.dot(to);
    if s <= eps {
        if c >= T::zero() {
            return Mat3::identity();
        }
        // Opposed: rotate 180° about any axis perpendicular to `from`.
        let pick = if from.x.abs() < real(0.9) {
            Vec3::axis(0)
        } else {
            Vec3::axis(1)
        };
        let perp = from.cross(pick).normalized().expect("perpendicular axis");
        return Mat3::from_axis_angle(perp, real(std::f64::consts::PI));
    }
    Mat3::from_axis_angle(axis / s, s.atan2(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_product_right_handed() {
        let x = Vec3::<f64>::axis(0);
        let y = Vec3::axis(1);
        assert_eq!(x.cross(y), Vec3::axis(2));
    }

    #[test]
    fn axis_angle_rotates_quarter_turn() {
        let r = Mat3::<f64>::from_axis_angle(Vec3::axis(2), std::f64::consts::FRAC_PI_2);
        let v = r.mul_vec(Vec3::axis(0));
        assert!((v - Vec3::axis(1)).norm() < 1e-12);
    }

    #[test]
    fn rigid_rejects_scaled_rotation() {
        let mut m = Mat3::<f64>::identity();
        m.rows[0][0] = 2.0;
        assert!(RigidTransform::new(m, Vec3::zero()).is_err());
    }

    #[test]
    fn rigid_rejects_reflection() {
        let mut m = Mat3::<f64>::identity();
        m.rows[2][2] = -1.0;
        assert!(RigidTransform::new(m, Vec3::zero()).is_err());
    }

    #[test]
    fn matrix4_round_trip() {
        let r = Mat3::<f64>::from_axis_angle(
            Vec3::new(1.0, 2.0, -1.0).normalized().unwrap(),
            0.7,
        );
        let t = RigidTransform::new(r, Vec3::new(0.5, -1.0, 3.0)).unwrap();
        let back = RigidTransform::from_matrix4(t.to_matrix4()).unwrap();
        assert!((back.apply(Vec3::splat(1.0)) - t.apply(Vec3::splat(1.0))).norm() < 1e-12);
    }

    #[test]
    fn rotation_between_handles_opposed_vectors() {
        let up = Vec3::<f64>::axis(2);
        let r = rotation_between(-up, up);
        assert!((r.mul_vec(-up) - up).norm() < 1e-9);
        assert!((r.det() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rotation_between_identity_when_aligned() {
        let up = Vec3::<f64>::axis(2);
        assert_eq!(rotation_between(up, up), Mat3::identity());
    }
}
