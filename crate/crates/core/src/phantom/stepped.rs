use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shapes::{box_corners, ShapeKind, ShapeSpec};
use super::{rasterize_segments, PhantomError, Segment};
use crate::geometry::{rotation_x, rotation_y, rotation_z};
use crate::points::PointSet3D;
use crate::volume::{Volume, VolumeSpec};

/// Evaluation object: a base block with a narrower step on top and
/// cylindrical through-holes along `z`, all rigidly rotated.
///
/// Local frame: the base spans `x` and `z` symmetrically; the base occupies
/// `y in [-(b + s)/2, (b - s)/2]` and the step sits on top of it, where `b`
/// and `s` are the base and step heights, so the whole object is centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteppedPrism {
    pub base_mm: [f64; 3],
    pub step_mm: [f64; 3],
    pub hole_diameter_mm: f64,
    /// Hole axes as `(x, y)` positions in the object frame.
    pub holes_mm: Vec<[f64; 2]>,
    /// `(pitch, roll, yaw)` of the whole object, degrees.
    pub orientation_deg: [f64; 3],
    pub attenuation: f64,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl Default for SteppedPrism {
    fn default() -> Self {
        Self {
            base_mm: [20.0, 8.0, 4.0],
            step_mm: [9.0, 4.0, 4.0],
            hole_diameter_mm: 2.0,
            holes_mm: vec![[-6.5, -4.2], [0.0, -4.2], [6.5, -4.2], [-6.5, 0.2], [0.0, 0.2], [6.5, 0.2]],
            orientation_deg: [12.0, 9.0, 6.0],
            attenuation: 1.0,
            noise_sigma: 0.05,
            rng_seed: 7,
        }
    }
}

/// Voxelized evaluation object with its ground truth.
#[derive(Debug, Clone)]
pub struct SteppedPrismPhantom {
    pub attenuation: Volume,
    pub edges: Volume,
    /// `corner0..7` (outer corners of the base) and `hole0..` (hole centers).
    pub reference: PointSet3D,
    /// Analytic edge pieces in world space.
    pub segments: Vec<Segment>,
}

impl SteppedPrism {
    fn rotation(&self) -> Matrix3<f64> {
        let [p, r, y] = self.orientation_deg;
        rotation_y(y) * rotation_x(p) * rotation_z(r)
    }

    fn solids(&self) -> (ShapeSpec, ShapeSpec, Vec<ShapeSpec>) {
        let b = self.base_mm;
        let s = self.step_mm;
        let base_y = -s[1] / 2.0;
        let step_y = b[1] / 2.0;
        let local = |kind, c: [f64; 3], dims: [f64; 3], rot: [f64; 3]| ShapeSpec {
            kind,
            center_mm: c,
            rotation_deg: rot,
            dimensions_mm: dims,
            corner_radius_mm: 0.0,
            attenuation: self.attenuation,
        };
        let base = local(ShapeKind::Box, [0.0, base_y, 0.0], b, [0.0; 3]);
        let step = local(ShapeKind::Box, [0.0, step_y, (s[2] - b[2]) / 2.0], s, [0.0; 3]);
        // Cylinder axes are local y; pitch 90 turns them onto z.
        let d = self.hole_diameter_mm;
        let holes = self
            .holes_mm
            .iter()
            .map(|h| local(ShapeKind::Cylinder, [h[0], h[1], 0.0], [d, b[2], d], [90.0, 0.0, 0.0]))
            .collect();
        (base, step, holes)
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |m: &str| Err(PhantomError::InvalidSpec(m.to_string()));
        let all = self.base_mm.iter().chain(&self.step_mm).chain(std::iter::once(&self.hole_diameter_mm));
        if all.clone().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("dimensions must be positive");
        }
        if self.step_mm[0] > self.base_mm[0] || self.step_mm[2] > self.base_mm[2] {
            return bad("step must not overhang the base");
        }
        let r = self.hole_diameter_mm / 2.0;
        let (hx, hy) = (self.base_mm[0] / 2.0, self.base_mm[1] / 2.0);
        let base_y = -self.step_mm[1] / 2.0;
        for h in &self.holes_mm {
            if h[0].abs() + r >= hx || (h[1] - base_y).abs() + r >= hy {
                return bad("hole breaks through the base side");
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0");
        }
        Ok(())
    }

    /// Voxelizes the object on `grid`.
    pub fn build(&self, grid: &VolumeSpec) -> Result<SteppedPrismPhantom, PhantomError> {
        self.validate()?;
        grid.validate()?;
        let rot = self.rotation();
        let inv = rot.transpose();
        let (base, step, holes) = self.solids();
        let inside = |x: &Vector3<f64>| {
            let p = inv * x;
            (base.contains(&p) && !holes.iter().any(|h| h.contains(&p))) || step.contains(&p)
        };
        let mut att = Volume::zeros(*grid);
        let plane = grid.nx * grid.ny;
        att.data_mut().par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    if inside(&grid.voxel_center(i, j, k)) {
                        slab[i + grid.nx * j] = self.attenuation;
                    }
                }
            }
        });
        if self.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
            let normal = Normal::new(0.0, self.noise_sigma).expect("sigma checked");
            for (idx, v) in att.data_mut().iter_mut().enumerate() {
                let (i, j, k) = grid.unindex(idx);
                if !inside(&grid.voxel_center(i, j, k)) {
                    *v += normal.sample(&mut rng);
                }
            }
        }

        let world = |p: &Vector3<f64>| rot * p;
        let mut segments: Vec<Segment> = Vec::new();
        for s in std::iter::once(&base).chain(std::iter::once(&step)).chain(&holes) {
            segments.extend(s.feature_segments().iter().map(|(a, b)| (world(a), world(b))));
        }
        let mut edges = Volume::zeros(*grid);
        rasterize_segments(&mut edges, &segments);

        let c = Vector3::from(base.center_mm);
        let half = Vector3::from(base.dimensions_mm) / 2.0;
        let mut labeled: Vec<(String, Vector3<f64>)> = box_corners(&half)
            .iter()
            .enumerate()
            .map(|(i, p)| (format!("corner{i}"), world(&(p + c))))
            .collect();
        labeled.extend(holes.iter().enumerate().map(|(i, h)| (format!("hole{i}"), world(&Vector3::from(h.center_mm)))));
        let reference = PointSet3D::from_mm(grid, labeled);
        Ok(SteppedPrismPhantom { attenuation: att, edges, reference, segments })
    }
}
