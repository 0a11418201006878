//! Two-view cone-beam geometry.
//!
//! World frame: origin at the rotation center, `y` is the (vertical)
//! rotation axis. A view at angle `θ` is the reference source/detector
//! assembly rotated by `θ` about `+y` using the right-hand rule, which is
//! counterclockwise when viewed from `+y`. In the reference assembly the
//! source sits at `(0, 0, -sod)` and the detector plane is `z = sdd - sod`;
//! detector columns (`u`) run along `+x` and rows (`v`) along `+y`.
//!
//! View 1 is the reference camera `P1 = K[I|0]`; view 2 is `P2 = K[R|t]`.
//! In the stereo setup the first view is the one at −29° and the second the
//! one at +32°.

mod camera;
mod cone_beam;
mod distance;
mod epipolar;
mod refine;

pub use camera::{IntrinsicMatrix, Pose, ProjectionMatrix};
pub use cone_beam::{rotation_x, rotation_y, rotation_z, ConeBeamGeometry};
pub use distance::DistanceField;
pub use epipolar::{
    decompose_essential, epipolar_residual, estimate_fundamental, resolve_translation_scale,
    triangulate, PointMatch, PointMatchSet,
};
pub use refine::{apply_pose_delta, refine_pose, PoseDelta, RefineConfig, RefineResult};

use thiserror::Error;

/// Errors raised by geometry construction, estimation and refinement.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal with det +1 (residual {0:.3e})")]
    NotARotation(f64),
    #[error("point projects to infinity (w = {0:.3e})")]
    PointAtInfinity(f64),
    #[error("need at least 8 point matches, got {0}")]
    NotEnoughMatches(usize),
    #[error("duplicate point match at index {0}")]
    DuplicateMatch(usize),
    #[error("degenerate match configuration: {0}")]
    Degenerate(String),
    #[error("no (R, t) candidate places a majority of points in front of both cameras (best {best} of {total})")]
    DecompositionFailed { best: usize, total: usize },
    #[error("known source-object distance must be positive, got {0}")]
    InvalidScale(f64),
    #[error("refinement needs at least one edge point")]
    NoEdgePoints,
    #[error("observed map {0} has no lit pixels")]
    EmptyObservation(usize),
    #[error("pose refinement left the search bounds at {best:?} (residual {residual:.3} px)")]
    OutOfBounds { best: PoseDelta, residual: f64 },
}
