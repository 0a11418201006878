//! The end-to-end experiment: phantom, two projections, 2D detection,
//! back-projection, 3D localization, point extraction and evaluation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::detect2d::{
    baseline_detect, detect_tiled, dilate_binary, keypoints_2d, render_keypoints, thin_binary, threshold_map, KeypointConfig, BaselineConfig, PixelClassifier, TileSpec};
use crate::eval::{match_points, position_error_report, PositionReport};
use crate::geometry::ConeBeamGeometry;
use crate::map3d::{coincidence_localize, extract_points, feature_points, PointExtraction, VolumeClassifier};
use crate::phantom::{SteppedPrism, SteppedPrismPhantom};
use crate::points::PointSet3D;
use crate::projection::{forward_project, Projection};
use crate::reconstruct::{single_view_backproject, stereo_backproject, StereoConfig};
use crate::volume::{Volume, VolumeSpec};
use crate::Error;

/// 2D feature detector choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DetectorConfig {
    Baseline(BaselineConfig),
    Model { path: PathBuf },
}

/// 3D localizer choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LocalizerConfig {
    /// Per-view back-projections, thresholded at `tau` of their maxima.
    Coincidence { tau: f64 },
    /// Summed back-projection through a trained volume classifier.
    Model { path: PathBuf, threshold: f64 },
}

/// Where discrete feature points come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PointsConfig {
    /// Keypoints of each thresholded 2D map (skeleton ends, branch points,
    /// loop centers) drawn as disks, back-projected and intersected with the
    /// coincidence rule; components become points.
    Keypoints { keypoints: KeypointConfig, disk_radius_px: f64, tau: f64, min_cluster: usize },
    /// Endpoints/junctions of the skeleton of the localized volume.
    Volume(PointExtraction),
}

/// Block tiling for detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TilingConfig {
    pub block: usize,
    pub grid: TileSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub grid_size: usize,
    pub voxel_pitch_mm: f64,
    /// Detector and distances; the view angle is taken from `views_deg`.
    pub geometry: ConeBeamGeometry,
    pub views_deg: (f64, f64),
    pub phantom: SteppedPrism,
    pub detector: DetectorConfig,
    #[serde(default)]
    pub tiling: Option<TilingConfig>,
    /// Threshold applied to the 2D probability maps.
    pub map_threshold: f64,
    /// Thin thresholded maps to one-pixel curves, then dilate by this many
    /// pixels; `None` keeps the thresholded maps as they are.
    #[serde(default)]
    pub thin_maps: Option<usize>,
    pub stereo: StereoConfig,
    pub localizer: LocalizerConfig,
    pub points: PointsConfig,
    /// Matching radius for evaluation, voxels.
    pub match_radius_voxels: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            grid_size: 128,
            voxel_pitch_mm: 0.24,
            geometry: ConeBeamGeometry::new(290.0, 923.0, 256, 256, 0.4, 0.0).expect("valid desk geometry"),
            views_deg: (-29.0, 32.0),
            phantom: SteppedPrism::default(),
            detector: DetectorConfig::Baseline(BaselineConfig::default()),
            tiling: None,
            map_threshold: 0.3,
            thin_maps: None,
            stereo: StereoConfig { ramp_filter: false, ..Default::default() },
            localizer: LocalizerConfig::Coincidence { tau: 0.5 },
            points: PointsConfig::Keypoints {
                keypoints: KeypointConfig::default(),
                disk_radius_px: 3.0,
                tau: 0.5,
                min_cluster: 3,
            },
            match_radius_voxels: 10.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if self.grid_size == 0 || !(self.voxel_pitch_mm > 0.0) {
            return bad("grid_size and voxel_pitch_mm must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.map_threshold) {
            return bad(format!("map_threshold {} outside [0, 1]", self.map_threshold));
        }
        if !(self.match_radius_voxels > 0.0) {
            return bad("match_radius_voxels must be positive".into());
        }
        self.geometry.validate()?;
        self.phantom.validate()?;
        let paths = [
            match &self.detector {
                DetectorConfig::Model { path } => Some(path),
                DetectorConfig::Baseline(_) => None,
            },
            match &self.localizer {
                LocalizerConfig::Model { path, .. } => Some(path),
                LocalizerConfig::Coincidence { .. } => None,
            },
        ];
        for path in paths.into_iter().flatten() {
            if !path.exists() {
                return bad(format!("model file {} not found", path.display()));
            }
        }
        let (LocalizerConfig::Coincidence { tau } | LocalizerConfig::Model { threshold: tau, .. }) = &self.localizer;
        if !(0.0..=1.0).contains(tau) {
            return bad(format!("localizer threshold {tau} outside [0, 1]"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<VolumeSpec, Error> {
        Ok(VolumeSpec::centered([self.grid_size; 3], self.voxel_pitch_mm)?)
    }

    pub fn view_geometries(&self) -> (ConeBeamGeometry, ConeBeamGeometry) {
        (self.geometry.at_angle(self.views_deg.0), self.geometry.at_angle(self.views_deg.1))
    }
}

/// Everything the pipeline produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub phantom: SteppedPrismPhantom,
    pub projections: [Projection; 2],
    pub maps: [Projection; 2],
    pub binary_maps: [Projection; 2],
    pub localized: Volume,
    pub points: PointSet3D,
    pub report: PositionReport,
}

/// Probability map of one projection under the configured detector.
pub fn detect(proj: &Projection, cfg: &PipelineConfig, model: Option<&PixelClassifier>) -> Result<Projection, Error> {
    let one = |block: &Projection| match (&cfg.detector, model) {
        (DetectorConfig::Model { .. }, Some(m)) => m.predict(block),
        (DetectorConfig::Baseline(b), _) => baseline_detect(block, b),
        (DetectorConfig::Model { .. }, None) => unreachable!("model loaded by caller"),
    };
    Ok(match (&cfg.tiling, &cfg.detector) {
        (Some(t), DetectorConfig::Baseline(b)) if b.scale.is_none() => {
            // Blocks share the whole-image normalization.
            let resp = crate::detect2d::hessian_response(proj, b.sigma);
            let scale = crate::detect2d::percentile(&resp, b.percentile);
            let fixed = BaselineConfig { scale: Some(scale), ..*b };
            detect_tiled(proj, t.block, t.grid, |blk| baseline_detect(blk, &fixed))?
        }
        (Some(t), _) => detect_tiled(proj, t.block, t.grid, one)?,
        (None, _) => one(proj)?,
    })
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput, Error> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let phantom = cfg.phantom.build(&grid)?;
    let (gl, gr) = cfg.view_geometries();
    let (pl, pr) = rayon::join(|| forward_project(&phantom.attenuation, &gl), || forward_project(&phantom.attenuation, &gr));
    let (pl, pr) = (pl?, pr?);

    let model = match &cfg.detector {
        DetectorConfig::Model { path } => Some(PixelClassifier::load(path)?),
        DetectorConfig::Baseline(_) => None,
    };
    let ml = detect(&pl, cfg, model.as_ref())?;
    let mr = detect(&pr, cfg, model.as_ref())?;
    let post = |m: Projection| match cfg.thin_maps {
        Some(r) => dilate_binary(&thin_binary(&m), r),
        None => m,
    };
    let bl = post(threshold_map(&ml, cfg.map_threshold)?);
    let br = post(threshold_map(&mr, cfg.map_threshold)?);

    let localized = match &cfg.localizer {
        LocalizerConfig::Coincidence { tau } => {
            let (vl, vr) = rayon::join(
                || single_view_backproject(&bl, &gl, &grid, &cfg.stereo),
                || single_view_backproject(&br, &gr, &grid, &cfg.stereo),
            );
            coincidence_localize(&vl?, &vr?, *tau)?
        }
        LocalizerConfig::Model { path, threshold } => {
            let clf = VolumeClassifier::load(path)?;
            let sum = stereo_backproject(&bl, &br, &gl, &gr, &grid, &cfg.stereo)?;
            let p = clf.localize(&sum)?;
            p.map(|v| if v >= *threshold { 1.0 } else { 0.0 })
        }
    };
    let points = match &cfg.points {
        PointsConfig::Volume(e) => feature_points(&localized, e),
        PointsConfig::Keypoints { keypoints, disk_radius_px, tau, min_cluster } => {
            let kl = render_keypoints(&keypoints_2d(&bl, keypoints), &bl, *disk_radius_px);
            let kr = render_keypoints(&keypoints_2d(&br, keypoints), &br, *disk_radius_px);
            let plain = StereoConfig { ramp_filter: false, ..cfg.stereo };
            let (vl, vr) = rayon::join(
                || single_view_backproject(&kl, &gl, &grid, &plain),
                || single_view_backproject(&kr, &gr, &grid, &plain),
            );
            extract_points(&coincidence_localize(&vl?, &vr?, *tau)?, *min_cluster)
        }
    };
    let matches = match_points(&points, &phantom.reference, cfg.match_radius_voxels)?;
    let report = position_error_report(&matches, cfg.voxel_pitch_mm);
    Ok(PipelineOutput {
        phantom,
        projections: [pl, pr],
        maps: [ml, mr],
        binary_maps: [bl, br],
        localized,
        points,
        report,
    })
}
