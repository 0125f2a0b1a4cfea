//! Scan records: one observation of a place.

use thiserror::Error;

use crate::geometry::{Point3, RigidTransform};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScanError {
    #[error("scan `{id}`: {features} feature rows for {points} points")]
    FeatureRowMismatch { id: String, points: usize, features: usize },
    #[error("scan `{id}`: non-finite value in {field}")]
    NonFinite { id: String, field: &'static str },
    #[error("scan id must be non-empty")]
    EmptyId,
}

/// Row-major `rows × dim` matrix of per-point local features.
#[derive(Debug, Clone, PartialEq)]
pub struct Features<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> Features<T> {
    pub fn new(dim: usize, data: Vec<T>) -> Option<Self> {
        if dim == 0 {
            return data.is_empty().then_some(Self { dim, data });
        }
        (data.len() % dim == 0).then_some(Self { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<T>]) -> Option<Self> {
        if rows.iter().any(|r| r.len() != dim) {
            return None;
        }
        Some(Self { dim, data: rows.concat() })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

/// One place observation: cloud, per-point features, global descriptor and
/// ground truth. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord<T> {
    id: String,
    cloud: Vec<Point3<T>>,
    local_features: Features<T>,
    global_descriptor: Vec<T>,
    gt_pose: RigidTransform<T>,
    geo_location: Point3<T>,
}

impl<T: Real> ScanRecord<T> {
    pub fn new(
        id: impl Into<String>,
        cloud: Vec<Point3<T>>,
        local_features: Features<T>,
        global_descriptor: Vec<T>,
        gt_pose: RigidTransform<T>,
        geo_location: Point3<T>,
    ) -> Result<Self, ScanError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ScanError::EmptyId);
        }
        // a zero-width feature matrix carries no rows
        if local_features.dim() > 0 && local_features.rows() != cloud.len() {
            return Err(ScanError::FeatureRowMismatch { id, points: cloud.len(), features: local_features.rows() });
        }
        if !local_features.as_slice().iter().all(|v| v.is_finite()) {
            return Err(ScanError::NonFinite { id, field: "local_features" });
        }
        if !global_descriptor.iter().all(|v| v.is_finite()) {
            return Err(ScanError::NonFinite { id, field: "global_descriptor" });
        }
        Ok(Self { id, cloud, local_features, global_descriptor, gt_pose, geo_location })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn cloud(&self) -> &[Point3<T>] {
        &self.cloud
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn local_features(&self) -> &Features<T> {
        &self.local_features
    }

    pub fn feature_dim(&self) -> usize {
        self.local_features.dim()
    }

    pub fn global_descriptor(&self) -> &[T] {
        &self.global_descriptor
    }

    pub fn descriptor_dim(&self) -> usize {
        self.global_descriptor.len()
    }

    /// Scan-to-world pose.
    pub fn gt_pose(&self) -> &RigidTransform<T> {
        &self.gt_pose
    }

    pub fn geo_location(&self) -> Point3<T> {
        self.geo_location
    }

    /// Ground-truth transform taking points of `self` into the frame of `other`.
    pub fn relative_pose_to(&self, other: &ScanRecord<T>) -> RigidTransform<T> {
        other.gt_pose.inverse().compose(&self.gt_pose)
    }

    /// Copy of this scan with every point moved by `t`; features unchanged.
    pub fn transformed(&self, t: &RigidTransform<T>) -> Self {
        let mut out = self.clone();
        for p in out.cloud.iter_mut() {
            *p = t.apply(*p);
        }
        out
    }

    pub fn with_id(&self, id: impl Into<String>) -> Self {
        let mut out = self.clone();
        out.id = id.into();
        out
    }
}
