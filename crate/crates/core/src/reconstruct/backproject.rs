use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fdk_prefilter, ReconstructError, Window};
use crate::geometry::ConeBeamGeometry;
use crate::projection::{Projection, ProjectionKind};
use crate::volume::{Volume, VolumeSpec};

/// How a feature map is turned into a back-projected evidence volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoConfig {
    /// Apply cosine weighting and ramp filtering before back-projection.
    pub ramp_filter: bool,
    pub window: Window,
}

impl Default for StereoConfig {
    fn default() -> Self {
        Self { ramp_filter: true, window: Window::Ramlak }
    }
}

fn check(proj: &Projection, geom: &ConeBeamGeometry, target: &VolumeSpec) -> Result<(), ReconstructError> {
    geom.validate()?;
    target.validate()?;
    if proj.rows() != geom.detector_rows || proj.cols() != geom.detector_cols {
        return Err(ReconstructError::DetectorMismatch {
            got_rows: proj.rows(),
            got_cols: proj.cols(),
            rows: geom.detector_rows,
            cols: geom.detector_cols,
        });
    }
    let (lo, hi) = target.bounds();
    for corner in 0..8 {
        let x = Vector3::new(
            if corner & 1 == 0 { lo.x } else { hi.x },
            if corner & 2 == 0 { lo.y } else { hi.y },
            if corner & 4 == 0 { lo.z } else { hi.z },
        );
        let d = geom.depth(&x);
        if d <= 0.0 {
            return Err(ReconstructError::BehindSource(d));
        }
    }
    Ok(())
}

fn voxel_driven(
    proj: &Projection,
    geom: &ConeBeamGeometry,
    target: &VolumeSpec,
    weight: impl Fn(&Vector3<f64>, f64) -> f64 + Sync,
) -> Result<Volume, ReconstructError> {
    check(proj, geom, target)?;
    let p = geom.projection_matrix()?;
    let mut vol = Volume::zeros(*target);
    let plane = target.nx * target.ny;
    vol.data_mut().par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        for j in 0..target.ny {
            for i in 0..target.nx {
                let x = target.voxel_center(i, j, k);
                let h = p.homogeneous(&x);
                let (u, v) = (h.x / h.z, h.y / h.z);
                let s = proj.sample(u, v);
                if s != 0.0 {
                    slab[i + target.nx * j] = s * weight(&x, geom.depth(&x));
                }
            }
        }
    });
    Ok(vol)
}

/// Voxel-driven cone-beam back-projection of an already weighted and filtered
/// projection, with the FDK distance weight `(sod / (sod - s))²`, where `s`
/// is the voxel's signed distance from the rotation axis towards the source.
/// Voxels projecting off the detector receive 0.
pub fn fdk_backproject(proj: &Projection, geom: &ConeBeamGeometry, target: &VolumeSpec) -> Result<Volume, ReconstructError> {
    let sod = geom.sod;
    voxel_driven(proj, geom, target, |_, depth| (sod / depth).powi(2))
}

/// Unfiltered back-projection weighted to approximate the adjoint of the
/// ray-driven forward projector: each voxel receives the bilinear detector
/// value times the total ray length the pixel grid spends inside the voxel,
/// `voxel³ · sdd² / (pixel² · depth² · cos γ)`.
pub fn backproject_unfiltered(proj: &Projection, geom: &ConeBeamGeometry, target: &VolumeSpec) -> Result<Volume, ReconstructError> {
    let src = geom.source();
    let scale = target.voxel_pitch.powi(3) * geom.sdd * geom.sdd / (geom.pixel_pitch * geom.pixel_pitch);
    voxel_driven(proj, geom, target, move |x, depth| {
        let cos_gamma = depth / (x - src).norm();
        scale / (depth * depth * cos_gamma)
    })
}

/// Full-scan FDK reconstruction from views evenly spread over 360°.
pub fn fdk_reconstruct(
    views: &[(Projection, ConeBeamGeometry)],
    target: &VolumeSpec,
    window: Window,
) -> Result<Volume, ReconstructError> {
    if views.is_empty() {
        return Err(ReconstructError::NoProjections);
    }
    let mut acc = Volume::zeros(*target);
    for (proj, geom) in views {
        let filtered = fdk_prefilter(proj, geom, window)?;
        let bp = fdk_backproject(&filtered, geom, target)?;
        acc = acc.add(&bp)?;
    }
    // Half of the angular step: each ray is measured twice over a full turn.
    acc.scale(PI / views.len() as f64);
    Ok(acc)
}

/// One view's evidence volume `B(map)`, clamped below at 0.
pub fn single_view_backproject(
    map: &Projection,
    geom: &ConeBeamGeometry,
    target: &VolumeSpec,
    config: &StereoConfig,
) -> Result<Volume, ReconstructError> {
    let bp = if config.ramp_filter {
        let filtered = fdk_prefilter(map, geom, config.window)?;
        fdk_backproject(&filtered, geom, target)?
    } else {
        fdk_backproject(map, geom, target)?
    };
    Ok(bp.map(|v| v.max(0.0)))
}

/// `B_L(mapL) + B_R(mapR)`, clamped below at 0.
pub fn stereo_backproject(
    map_l: &Projection,
    map_r: &Projection,
    geom_l: &ConeBeamGeometry,
    geom_r: &ConeBeamGeometry,
    target: &VolumeSpec,
    config: &StereoConfig,
) -> Result<Volume, ReconstructError> {
    for m in [map_l, map_r] {
        if m.kind() != ProjectionKind::Probability {
            return Err(ReconstructError::WrongKind(m.kind()));
        }
    }
    let one = |map: &Projection, geom: &ConeBeamGeometry| -> Result<Volume, ReconstructError> {
        if config.ramp_filter {
            let filtered = fdk_prefilter(map, geom, config.window)?;
            fdk_backproject(&filtered, geom, target)
        } else {
            fdk_backproject(map, geom, target)
        }
    };
    let (l, r) = rayon::join(|| one(map_l, geom_l), || one(map_r, geom_r));
    Ok(l?.add(&r?)?.map(|v| v.max(0.0)))
}
