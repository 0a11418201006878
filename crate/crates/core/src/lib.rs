//! Stereo X-ray feature tomography.
//!
//! Maps object corners and edges into 3D from exactly two cone-beam
//! projection images. The pipeline detects features in each projection,
//! back-projects the two feature maps through the calibrated cone-beam
//! geometry and localizes features where the back-projected evidence
//! coincides in 3D.
//!
//! Module map:
//!
//! - [`geometry`]: cone-beam geometry, camera matrices, epipolar calibration
//!   and pose refinement.
//! - [`projection`]: ray-driven forward projection and Beer-Lambert conversion.
//! - [`reconstruct`]: ramp filtering and FDK back-projection.
//! - [`phantom`]: synthetic attenuation/edge volumes and training sets.
//! - [`detect2d`]: pixel-wise feature detection, block tiling and merging.
//! - [`map3d`]: 3D feature localization and point extraction.
//! - [`eval`]: position and reprojection error reports.
//! - [`pipeline`]: the end-to-end desk-scale experiment driven by one config.

pub mod detect2d;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod map3d;
pub mod nn;
pub mod phantom;
pub mod pipeline;
pub mod points;
pub mod projection;
pub mod reconstruct;
pub mod volume;

mod error;

pub use error::Error;
pub use geometry::{
    ConeBeamGeometry, GeometryError, IntrinsicMatrix, PointMatch, PointMatchSet, Pose,
    ProjectionMatrix,
};
pub use points::{LabeledPoint, PointSet3D};
pub use projection::{Projection, ProjectionKind};
pub use volume::{Volume, VolumeSpec};

/// Shorthand for 3-vectors in world millimeters.
pub type Vec3 = nalgebra::Vector3<f64>;
/// Shorthand for 3x3 matrices.
pub type Mat3 = nalgebra::Matrix3<f64>;
