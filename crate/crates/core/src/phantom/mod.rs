//! Synthetic phantoms: attenuation volumes built from simple shapes inside a
//! prism, matching binary edge/corner ground truth, rotation sweeps and
//! projected training pairs.

mod shapes;
mod stepped;

pub use shapes::{point_segment_distance, Segment, ShapeKind, ShapeSpec};
pub use stepped::{SteppedPrism, SteppedPrismPhantom};

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect2d::{tile_image, DetectError, TileSpec};
use crate::geometry::{rotation_x, rotation_y, rotation_z, ConeBeamGeometry};
use crate::projection::{forward_project, render_edge_projection, Projection, ProjectionError, ProjectionKind};
use crate::reconstruct::{stereo_backproject, ReconstructError, StereoConfig};
use crate::volume::{Volume, VolumeError, VolumeSpec};

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Tiling(#[from] DetectError),
}

fn default_prism_attenuation() -> f64 {
    1.0
}

fn default_noise() -> f64 {
    0.05
}

/// Shapes inside an axis-aligned prism centered on the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub prism_mm: [f64; 3],
    #[serde(default = "default_prism_attenuation")]
    pub prism_attenuation: f64,
    #[serde(default)]
    pub shapes: Vec<ShapeSpec>,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

/// Parameters for [`PhantomSpec::random`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomPhantomConfig {
    pub prism_mm: [f64; 3],
    pub prism_attenuation: f64,
    pub shape_attenuation: f64,
    pub noise_sigma: f64,
    /// Inclusive range of the number of shapes.
    pub shape_count: (usize, usize),
    /// Shape extents as a fraction of the smallest prism side.
    pub size_fraction: (f64, f64),
}

impl Default for RandomPhantomConfig {
    fn default() -> Self {
        Self {
            prism_mm: [24.0, 16.0, 20.0],
            prism_attenuation: 1.0,
            shape_attenuation: 0.2,
            noise_sigma: 0.05,
            shape_count: (3, 6),
            size_fraction: (0.2, 0.45),
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |m: String| Err(PhantomError::InvalidSpec(m));
        if self.prism_mm.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad(format!("prism dimensions must be positive, got {:?}", self.prism_mm));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        let half = Vector3::from(self.prism_mm) / 2.0;
        for (i, s) in self.shapes.iter().enumerate() {
            s.validate().map_err(|m| PhantomError::InvalidSpec(format!("shape {i}: {m}")))?;
            if s.attenuation >= self.prism_attenuation {
                return bad(format!(
                    "shape {i} attenuation {} must be below the prism's {}",
                    s.attenuation, self.prism_attenuation
                ));
            }
            let escapes = s
                .bounding_corners()
                .iter()
                .any(|c| c.x.abs() > half.x || c.y.abs() > half.y || c.z.abs() > half.z);
            if escapes {
                return bad(format!("shape {i} escapes the prism"));
            }
        }
        Ok(())
    }

    /// Random non-overlapping shapes inside the prism, drawn from `seed`.
    pub fn random(seed: u64, cfg: &RandomPhantomConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = cfg.shape_count;
        let target = rng.random_range(lo..=hi.max(lo));
        let min_side = cfg.prism_mm.iter().copied().fold(f64::INFINITY, f64::min);
        let half = Vector3::from(cfg.prism_mm) / 2.0;
        let mut shapes: Vec<ShapeSpec> = Vec::with_capacity(target);
        let kinds = [ShapeKind::Box, ShapeKind::RoundedBox, ShapeKind::Cylinder, ShapeKind::Wedge];
        let mut attempts = 0;
        while shapes.len() < target && attempts < 1000 {
            attempts += 1;
            let kind = kinds[rng.random_range(0..kinds.len())];
            let dims = [0; 3].map(|_| rng.random_range(cfg.size_fraction.0..cfg.size_fraction.1) * min_side);
            let rot = [0; 3].map(|_| rng.random_range(-180.0..180.0));
            let min_dim = dims.iter().copied().fold(f64::INFINITY, f64::min);
            let corner = match kind {
                ShapeKind::RoundedBox => rng.random_range(0.15..0.4) * min_dim,
                _ => 0.0,
            };
            let mut s = ShapeSpec {
                kind,
                center_mm: [0.0; 3],
                rotation_deg: rot,
                dimensions_mm: dims,
                corner_radius_mm: corner,
                attenuation: cfg.shape_attenuation,
            };
            let r = s.bounding_radius();
            let margin = half.add_scalar(-r);
            if margin.iter().any(|m| *m <= 0.0) {
                continue;
            }
            s.center_mm = [0, 1, 2].map(|a| rng.random_range(-margin[a]..margin[a]));
            let c = Vector3::from(s.center_mm);
            let clear = shapes
                .iter()
                .all(|o| (Vector3::from(o.center_mm) - c).norm() > o.bounding_radius() + r);
            if clear {
                shapes.push(s);
            }
        }
        Self {
            prism_mm: cfg.prism_mm,
            prism_attenuation: cfg.prism_attenuation,
            shapes,
            noise_sigma: cfg.noise_sigma,
            rng_seed: seed,
        }
    }

    fn prism_shape(&self) -> ShapeSpec {
        ShapeSpec {
            kind: ShapeKind::Box,
            center_mm: [0.0; 3],
            rotation_deg: [0.0; 3],
            dimensions_mm: self.prism_mm,
            corner_radius_mm: 0.0,
            attenuation: self.prism_attenuation,
        }
    }

    /// All analytic edge pieces: the prism's 12 edges followed by the shapes'.
    pub fn feature_segments(&self) -> Vec<Segment> {
        let mut segs = self.prism_shape().feature_segments();
        for s in &self.shapes {
            segs.extend(s.feature_segments());
        }
        segs
    }
}

/// Lights the voxels of a digital line along each segment: one voxel per
/// step along the dominant axis, each within one voxel of the segment.
pub fn rasterize_segments(edges: &mut Volume, segments: &[Segment]) {
    let spec = *edges.spec();
    for (a, b) in segments {
        let va = spec.mm_to_voxel(a);
        let vb = spec.mm_to_voxel(b);
        let d = vb - va;
        let steps = d.abs().max().ceil().max(0.0) as usize;
        for s in 0..=steps {
            let t = if steps == 0 { 0.0 } else { s as f64 / steps as f64 };
            let p = va + d * t;
            let (i, j, k) = (p.x.round(), p.y.round(), p.z.round());
            if i >= 0.0 && j >= 0.0 && k >= 0.0 {
                let (i, j, k) = (i as usize, j as usize, k as usize);
                if i < spec.nx && j < spec.ny && k < spec.nz {
                    edges.set(i, j, k, 1.0);
                }
            }
        }
    }
}

/// Voxelizes the phantom on `grid`; returns `(attenuation, edges)`.
pub fn generate_phantom(spec: &PhantomSpec, grid: &VolumeSpec) -> Result<(Volume, Volume), PhantomError> {
    spec.validate()?;
    grid.validate()?;
    let half = Vector3::from(spec.prism_mm) / 2.0;
    let inside_prism = |x: &Vector3<f64>| x.x.abs() <= half.x && x.y.abs() <= half.y && x.z.abs() <= half.z;
    let mut att = Volume::zeros(*grid);
    let plane = grid.nx * grid.ny;
    att.data_mut().par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let x = grid.voxel_center(i, j, k);
                if !inside_prism(&x) {
                    continue;
                }
                let mut v = spec.prism_attenuation;
                for s in &spec.shapes {
                    if s.contains(&x) {
                        v = s.attenuation;
                    }
                }
                slab[i + grid.nx * j] = v;
            }
        }
    });
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma checked");
        for idx in 0..grid.len() {
            let (i, j, k) = grid.unindex(idx);
            if !inside_prism(&grid.voxel_center(i, j, k)) {
                att.data_mut()[idx] += normal.sample(&mut rng);
            }
        }
    }
    let mut edges = Volume::zeros(*grid);
    rasterize_segments(&mut edges, &spec.feature_segments());
    Ok((att, edges))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn rotation(self, deg: f64) -> Matrix3<f64> {
        match self {
            Axis::X => rotation_x(deg),
            Axis::Y => rotation_y(deg),
            Axis::Z => rotation_z(deg),
        }
    }

    /// Axis along the longest of three extents (first wins on ties).
    pub fn longest(dims: [f64; 3]) -> Self {
        let mut best = 0;
        for a in 1..3 {
            if dims[a] > dims[best] {
                best = a;
            }
        }
        [Axis::X, Axis::Y, Axis::Z][best]
    }
}

/// Nearest-neighbour rotation of a binary volume about its center, in
/// voxel-index space. Samples falling outside the grid are 0.
pub fn rotate_edge_volume(edges: &Volume, angle_deg: f64, axis: Axis) -> Volume {
    let spec = *edges.spec();
    let inv = axis.rotation(angle_deg).transpose();
    let c = Vector3::new(spec.nx as f64 - 1.0, spec.ny as f64 - 1.0, spec.nz as f64 - 1.0) / 2.0;
    let mut out = Volume::zeros(spec);
    let plane = spec.nx * spec.ny;
    out.data_mut().par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let p = inv * (Vector3::new(i as f64, j as f64, k as f64) - c) + c;
                let v = edges.get_or_zero(p.x.round() as i64, p.y.round() as i64, p.z.round() as i64);
                slab[i + spec.nx * j] = if v > 0.5 { 1.0 } else { 0.0 };
            }
        }
    });
    out
}

/// Uniform random rotation from a normalized Gaussian quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    loop {
        let q: Vector4<f64> = Vector4::from_fn(|_, _| StandardNormal.sample(rng));
        let n = q.norm();
        if n > 1e-9 {
            let q = nalgebra::Quaternion::from_vector(q / n);
            return UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        }
    }
}

/// An input/target block pair for 2D detector training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    /// Line-integral block.
    pub input: Projection,
    /// Binary feature mask block.
    pub target: Projection,
    /// `phantom<i>/view<j>`.
    pub source: String,
    /// Top-left `(row, col)` of the block in the full projection.
    pub offset: (usize, usize),
}

/// Settings shared by every phantom in a 2D training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dataset2dConfig {
    pub grid: VolumeSpec,
    pub geometry: ConeBeamGeometry,
    pub views_per_phantom: usize,
    pub block: usize,
    pub blocks_per_side: usize,
}

/// Random-orientation projections of each phantom (inputs) and of its edge
/// volume (targets), cut into a `blocks_per_side²` grid of blocks.
pub fn build_2d_training_set(phantoms: &[PhantomSpec], cfg: &Dataset2dConfig) -> Result<Vec<TrainingPair>, PhantomError> {
    cfg.geometry.validate().map_err(ProjectionError::from)?;
    let side = cfg.geometry.detector_rows.min(cfg.geometry.detector_cols);
    crate::detect2d::tile_offsets(side, cfg.block, TileSpec::PerSide(cfg.blocks_per_side))?;

    let views: Vec<(usize, usize, Matrix3<f64>)> = phantoms
        .iter()
        .enumerate()
        .flat_map(|(p, spec)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed ^ 0x5eed_0f_7a11);
            (0..cfg.views_per_phantom).map(move |v| (p, v, random_rotation(&mut rng))).collect::<Vec<_>>()
        })
        .collect();
    let volumes: Vec<(Volume, Volume)> = phantoms
        .par_iter()
        .map(|s| generate_phantom(s, &cfg.grid))
        .collect::<Result<_, _>>()?;

    let per_view: Vec<Vec<TrainingPair>> = views
        .par_iter()
        .map(|(p, v, rot)| {
            let geom = cfg.geometry.with_orientation(rot);
            let (att, edges) = &volumes[*p];
            let input = forward_project(att, &geom)?;
            let target = render_edge_projection(edges, &geom)?;
            let tiles_in = tile_image(&input, cfg.block, TileSpec::PerSide(cfg.blocks_per_side))?;
            let tiles_t = tile_image(&target, cfg.block, TileSpec::PerSide(cfg.blocks_per_side))?;
            Ok(tiles_in
                .into_iter()
                .zip(tiles_t)
                .map(|(a, b)| TrainingPair {
                    offset: (a.row, a.col),
                    input: a.data,
                    target: b.data,
                    source: format!("phantom{p}/view{v}"),
                })
                .collect())
        })
        .collect::<Result<_, PhantomError>>()?;
    Ok(per_view.into_iter().flatten().collect())
}

/// Back-projected stereo evidence and the matching clean edge volume.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumePair {
    pub angle_deg: f64,
    pub input: Volume,
    pub target: Volume,
}

/// Settings for [`build_3d_training_set`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dataset3dConfig {
    pub geometry: ConeBeamGeometry,
    pub view_angles_deg: (f64, f64),
    pub axis: Axis,
    pub stereo: StereoConfig,
}

/// For each angle: rotate the edge volume, render its two edge projections,
/// back-project them into the same grid and pair with the rotated volume.
pub fn build_3d_training_set(
    edges: &Volume,
    angles_deg: &[f64],
    cfg: &Dataset3dConfig,
) -> Result<Vec<VolumePair>, PhantomError> {
    let gl = cfg.geometry.at_angle(cfg.view_angles_deg.0);
    let gr = cfg.geometry.at_angle(cfg.view_angles_deg.1);
    gl.validate().map_err(ProjectionError::from)?;
    angles_deg
        .par_iter()
        .map(|&a| {
            let target = rotate_edge_volume(edges, a, cfg.axis);
            let ml = render_edge_projection(&target, &gl)?;
            let mr = render_edge_projection(&target, &gr)?;
            let input = stereo_backproject(&ml, &mr, &gl, &gr, target.spec(), &cfg.stereo)?;
            Ok(VolumePair { angle_deg: a, input, target })
        })
        .collect()
}

/// Target mask values are exactly 0 or 1.
pub fn is_binary(p: &Projection) -> bool {
    p.kind() == ProjectionKind::Probability && p.data().iter().all(|v| *v == 0.0 || *v == 1.0)
}
