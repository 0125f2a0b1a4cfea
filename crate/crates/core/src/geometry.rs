//! Points and rigid transforms.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Mat3};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate in point ({0}, {1}, {2})")]
    NonFinitePoint(f64, f64, f64),
    #[error("rotation is not orthonormal with det +1 (deviation {deviation:e}, tolerance {tolerance:e})")]
    NotARotation { deviation: f64, tolerance: f64 },
    #[error("non-finite value in transform")]
    NonFiniteTransform,
    #[error("homogeneous matrix bottom row must be [0, 0, 0, 1]")]
    BadHomogeneousRow,
}

/// A point in metric space. All components are finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Point3<T> {
    /// Builds a point, panicking on NaN or infinite input.
    pub fn new(x: T, y: T, z: T) -> Self {
        Self::try_new(x, y, z).expect("finite point")
    }

    pub fn try_new(x: T, y: T, z: T) -> Result<Self, GeometryError> {
        if x.is_finite() && y.is_finite() && z.is_finite() {
            Ok(Self { x, y, z })
        } else {
            Err(GeometryError::NonFinitePoint(x.as_f64(), y.as_f64(), z.as_f64()))
        }
    }

    pub fn origin() -> Self {
        Self { x: T::zero(), y: T::zero(), z: T::zero() }
    }

    #[inline]
    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn norm_squared(self) -> T {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn scale(self, s: T) -> Self {
        Self { x: self.x * s, y: self.y * s, z: self.z * s }
    }

    pub fn cast<U: Real>(self) -> Point3<U> {
        Point3 { x: U::lit(self.x.as_f64()), y: U::lit(self.y.as_f64()), z: U::lit(self.z.as_f64()) }
    }
}

impl<T: Real> Add for Point3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { x: self.x + o.x, y: self.y + o.y, z: self.z + o.z }
    }
}

impl<T: Real> Sub for Point3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { x: self.x - o.x, y: self.y - o.y, z: self.z - o.z }
    }
}

/// Euclidean distance between two locations.
#[inline]
pub fn geo_distance<T: Real>(a: Point3<T>, b: Point3<T>) -> T {
    (a - b).norm()
}

/// Element of SE(3): `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform<T> {
    rotation: Mat3<T>,
    translation: [T; 3],
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self { rotation: linalg::identity3(), translation: [T::zero(); 3] }
    }

    /// Validates `rotation` against [`Real::ORTHONORMAL_TOL`].
    pub fn new(rotation: Mat3<T>, translation: [T; 3]) -> Result<Self, GeometryError> {
        Self::with_tolerance(rotation, translation, T::ORTHONORMAL_TOL)
    }

    /// Validates `rotation` with an explicit Frobenius tolerance on `RᵀR − I`
    /// and on `det R − 1`.
    pub fn with_tolerance(rotation: Mat3<T>, translation: [T; 3], tolerance: f64) -> Result<Self, GeometryError> {
        let finite = rotation.iter().flatten().chain(translation.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::NonFiniteTransform);
        }
        let deviation = rotation_deviation(&rotation);
        if deviation > tolerance {
            return Err(GeometryError::NotARotation { deviation, tolerance });
        }
        Ok(Self { rotation, translation })
    }

    /// Only for matrices that are rotations by construction.
    pub(crate) fn from_parts_unchecked(rotation: Mat3<T>, translation: [T; 3]) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(t: [T; 3]) -> Self {
        Self { rotation: linalg::identity3(), translation: t }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally) followed by `t`.
    pub fn from_axis_angle(axis: [T; 3], angle: T, t: [T; 3]) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if n == T::zero() {
            return Self::from_translation(t);
        }
        let (x, y, z) = (axis[0] / n, axis[1] / n, axis[2] / n);
        let (s, c) = angle.sin_cos();
        let k = T::one() - c;
        let rotation = [
            [c + x * x * k, x * y * k - z * s, x * z * k + y * s],
            [y * x * k + z * s, c + y * y * k, y * z * k - x * s],
            [z * x * k - y * s, z * y * k + x * s, c + z * z * k],
        ];
        Self { rotation, translation: t }
    }

    pub fn rot_z(angle: T) -> Self {
        Self::from_axis_angle([T::zero(), T::zero(), T::one()], angle, [T::zero(); 3])
    }

    pub fn rotation(&self) -> &Mat3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> [T; 3] {
        self.translation
    }

    #[inline]
    pub fn apply(&self, p: Point3<T>) -> Point3<T> {
        let r = linalg::mat_vec(&self.rotation, p.to_array());
        Point3 { x: r[0] + self.translation[0], y: r[1] + self.translation[1], z: r[2] + self.translation[2] }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        let rotation = linalg::mat_mul(&self.rotation, &other.rotation);
        let rt = linalg::mat_vec(&self.rotation, other.translation);
        let translation = [rt[0] + self.translation[0], rt[1] + self.translation[1], rt[2] + self.translation[2]];
        Self { rotation, translation }
    }

    pub fn inverse(&self) -> Self {
        let rt = linalg::transpose(&self.rotation);
        let t = linalg::mat_vec(&rt, self.translation);
        Self { rotation: rt, translation: [-t[0], -t[1], -t[2]] }
    }

    /// Row-major 4×4 homogeneous matrix.
    pub fn to_homogeneous(&self) -> [[T; 4]; 4] {
        let r = &self.rotation;
        let t = &self.translation;
        let (z, o) = (T::zero(), T::one());
        [
            [r[0][0], r[0][1], r[0][2], t[0]],
            [r[1][0], r[1][1], r[1][2], t[1]],
            [r[2][0], r[2][1], r[2][2], t[2]],
            [z, z, z, o],
        ]
    }

    pub fn from_homogeneous(m: &[[T; 4]; 4], tolerance: f64) -> Result<Self, GeometryError> {
        let (z, o) = (T::zero(), T::one());
        if m[3] != [z, z, z, o] {
            return Err(GeometryError::BadHomogeneousRow);
        }
        let rotation = [[m[0][0], m[0][1], m[0][2]], [m[1][0], m[1][1], m[1][2]], [m[2][0], m[2][1], m[2][2]]];
        Self::with_tolerance(rotation, [m[0][3], m[1][3], m[2][3]], tolerance)
    }

    /// Rotation angle of `R` in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> T {
        let r = &self.rotation;
        let c = (r[0][0] + r[1][1] + r[2][2] - T::one()) / T::lit(2.0);
        c.max(-T::one()).min(T::one()).acos()
    }

    pub fn cast<U: Real>(&self) -> RigidTransform<U> {
        let mut rotation = [[U::zero(); 3]; 3];
        for (dst, src) in rotation.iter_mut().zip(&self.rotation) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::lit(s.as_f64());
            }
        }
        let t = self.translation;
        RigidTransform { rotation, translation: [U::lit(t[0].as_f64()), U::lit(t[1].as_f64()), U::lit(t[2].as_f64())] }
    }
}

/// max(‖RᵀR − I‖_F, |det R − 1|)
pub(crate) fn rotation_deviation<T: Real>(r: &Mat3<T>) -> f64 {
    let rtr = linalg::mat_mul(&linalg::transpose(r), r);
    let ortho = linalg::frobenius_distance(&rtr, &linalg::identity3()).as_f64();
    let det = (linalg::det(r) - T::one()).abs().as_f64();
    ortho.max(det)
}
