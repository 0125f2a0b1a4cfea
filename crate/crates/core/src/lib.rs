//! Re-ranking of point-cloud place-recognition results by geometric
//! verification.
//!
//! A query scan is matched against a database by global descriptor; the
//! top candidates are then re-scored from the geometric consistency of
//! their local feature matches. The spectral score is the leading
//! eigenvalue of a pairwise compatibility matrix, so no hypothesis sampling
//! is needed. RANSAC inlier-ratio scoring and query expansion are provided
//! as alternatives, together with registration, evaluation metrics, a
//! binary scan archive, and a seeded synthetic-world generator.
//!
//! Numeric code is generic over [`Real`]; `f32` and `f64` aliases for the
//! main types live at the crate root.

pub mod geometry;
mod kdtree;
pub mod linalg;
pub mod matching;
pub mod metrics;
pub mod pipeline;
pub mod ranking;
pub mod registration;
pub mod report;
pub mod rerank;
pub mod retrieval;
pub mod scalar;
pub mod scan;
pub mod spectral;
pub mod storage;
pub mod synthgen;

pub use geometry::{Point3, RigidTransform};
pub use matching::{Correspondence, CorrespondenceSet, MatchParams};
pub use ranking::{OrderingKind, RankedEntry, RankedList};
pub use rerank::{rerank, RerankParams, Strategy};
pub use retrieval::DescriptorIndex;
pub use scalar::Real;
pub use scan::{Features, ScanRecord};
pub use spectral::{CompatibilityMatrix, SpectralParams};
pub use storage::Dataset;
pub use synthgen::{World, WorldConfig};

pub type Point3f = Point3<f32>;
pub type Point3d = Point3<f64>;
pub type RigidTransformf = RigidTransform<f32>;
pub type RigidTransformd = RigidTransform<f64>;
pub type ScanRecordf = ScanRecord<f32>;
pub type ScanRecordd = ScanRecord<f64>;
pub type CorrespondenceSetf = CorrespondenceSet<f32>;
pub type CorrespondenceSetd = CorrespondenceSet<f64>;
pub type RankedListf = RankedList<f32>;
pub type RankedListd = RankedList<f64>;
pub type DescriptorIndexf = DescriptorIndex<f32>;
pub type DescriptorIndexd = DescriptorIndex<f64>;
pub type Datasetf = Dataset<f32>;
pub type Datasetd = Dataset<f64>;
