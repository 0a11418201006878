//! Filtered back-projection: cosine pre-weighting, row-wise ramp filtering
//! and voxel-driven cone-beam back-projection (FDK), plus the two-view sum
//! used as a feature-coincidence map.
//!
//! With only two views the summed back-projection is not a quantitative
//! reconstruction; its values are evidence, not attenuation.

mod backproject;
mod filter;

pub use backproject::{
    backproject_unfiltered, fdk_backproject, fdk_reconstruct, single_view_backproject,
    stereo_backproject, StereoConfig,
};
pub use filter::{fdk_prefilter, ramlak_kernel, ramp_filter, ramp_filter_with_spacing, Window};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::projection::ProjectionKind;
use crate::volume::VolumeError;

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("cannot filter a {0:?} projection")]
    WrongKind(ProjectionKind),
    #[error("voxel grid reaches behind the source (depth {0:.3} mm)")]
    BehindSource(f64),
    #[error("projection is {got_rows}x{got_cols} but the geometry expects {rows}x{cols}")]
    DetectorMismatch { got_rows: usize, got_cols: usize, rows: usize, cols: usize },
    #[error("no projections given")]
    NoProjections,
}
