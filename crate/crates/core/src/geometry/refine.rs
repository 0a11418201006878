use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{rotation_x, rotation_y, rotation_z, DistanceField, GeometryError, ProjectionMatrix};
use crate::points::PointSet3D;
use crate::projection::Projection;

/// Small rigid perturbation of the object: rotation about the point-set
/// centroid (`yaw` about y, `pitch` about x, `roll` about z, degrees) followed
/// by a translation in millimeters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseDelta {
    pub pitch_deg: f64,
    pub roll_deg: f64,
    pub yaw_deg: f64,
    pub dx_mm: f64,
    pub dy_mm: f64,
    pub dz_mm: f64,
}

impl PoseDelta {
    pub fn to_array(self) -> [f64; 6] {
        [self.pitch_deg, self.roll_deg, self.yaw_deg, self.dx_mm, self.dy_mm, self.dz_mm]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { pitch_deg: a[0], roll_deg: a[1], yaw_deg: a[2], dx_mm: a[3], dy_mm: a[4], dz_mm: a[5] }
    }
}

/// Applies `delta` to `points`, rotating about `center`.
pub fn apply_pose_delta(points: &[Vector3<f64>], center: &Vector3<f64>, delta: &PoseDelta) -> Vec<Vector3<f64>> {
    let r = rotation_y(delta.yaw_deg) * rotation_x(delta.pitch_deg) * rotation_z(delta.roll_deg);
    let t = Vector3::new(delta.dx_mm, delta.dy_mm, delta.dz_mm);
    points.iter().map(|p| r * (p - center) + center + t).collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Half-width of the search box for each rotation (degrees).
    pub angle_bound_deg: f64,
    /// Half-width of the search box for each translation (mm).
    pub shift_bound_mm: f64,
    pub sweeps: usize,
    pub grid_points: usize,
    pub golden_iterations: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { angle_bound_deg: 5.0, shift_bound_mm: 10.0, sweeps: 6, grid_points: 11, golden_iterations: 24 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RefineResult {
    pub delta: PoseDelta,
    /// Mean symmetric point-to-lit-pixel distance at `delta` (pixels).
    pub residual_px: f64,
    pub initial_residual_px: f64,
    pub evaluations: usize,
}

/// Bucket grid over projected points for nearest-neighbor queries.
struct PointGrid {
    cell: f64,
    origin: (f64, f64),
    dims: (usize, usize),
    start: Vec<usize>,
    items: Vec<(f64, f64)>,
}

impl PointGrid {
    fn new(points: &[(f64, f64)], extra: &[(f64, f64)], cell: f64) -> Self {
        let all = points.iter().chain(extra);
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in all {
            lo = (lo.0.min(p.0), lo.1.min(p.1));
            hi = (hi.0.max(p.0), hi.1.max(p.1));
        }
        let dims = (
            (((hi.0 - lo.0) / cell).floor() as usize + 1).max(1),
            (((hi.1 - lo.1) / cell).floor() as usize + 1).max(1),
        );
        let cell_of = |p: &(f64, f64)| {
            let cx = (((p.0 - lo.0) / cell) as usize).min(dims.0 - 1);
            let cy = (((p.1 - lo.1) / cell) as usize).min(dims.1 - 1);
            cy * dims.0 + cx
        };
        let mut counts = vec![0usize; dims.0 * dims.1 + 1];
        for p in points {
            counts[cell_of(p) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![(0.0, 0.0); points.len()];
        for p in points {
            let c = cell_of(p);
            items[fill[c]] = *p;
            fill[c] += 1;
        }
        Self { cell, origin: lo, dims, start: counts, items }
    }

    fn nearest(&self, q: (f64, f64)) -> f64 {
        let cx = (((q.0 - self.origin.0) / self.cell).max(0.0) as usize).min(self.dims.0 - 1) as i64;
        let cy = (((q.1 - self.origin.1) / self.cell).max(0.0) as usize).min(self.dims.1 - 1) as i64;
        let mut best = f64::INFINITY;
        let max_r = self.dims.0.max(self.dims.1) as i64;
        for r in 0..=max_r {
            for y in (cy - r)..=(cy + r) {
                if y < 0 || y >= self.dims.1 as i64 {
                    continue;
                }
                let ring_x: Box<dyn Iterator<Item = i64>> = if y == cy - r || y == cy + r {
                    Box::new((cx - r)..=(cx + r))
                } else {
                    Box::new([cx - r, cx + r].into_iter())
                };
                for x in ring_x {
                    if x < 0 || x >= self.dims.0 as i64 {
                        continue;
                    }
                    let c = y as usize * self.dims.0 + x as usize;
                    for p in &self.items[self.start[c]..self.start[c + 1]] {
                        best = best.min((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2));
                    }
                    if r == 0 {
                        break;
                    }
                }
            }
            if best.is_finite() && best.sqrt() <= r as f64 * self.cell {
                break;
            }
        }
        best.sqrt()
    }
}

struct Objective<'a> {
    points: Vec<Vector3<f64>>,
    center: Vector3<f64>,
    cameras: [&'a ProjectionMatrix; 2],
    fields: [DistanceField; 2],
}

impl Objective<'_> {
    fn view_residual(&self, moved: &[Vector3<f64>], view: usize) -> f64 {
        let cam = self.cameras[view];
        let field = &self.fields[view];
        let projected: Vec<(f64, f64)> = moved
            .iter()
            .map(|x| cam.project(x).unwrap_or((f64::INFINITY, f64::INFINITY)))
            .collect();
        if projected.iter().any(|p| !p.0.is_finite()) {
            return f64::INFINITY;
        }
        let forward: Vec<f64> = projected.par_iter().map(|p| field.distance(p.0, p.1)).collect();
        let forward = forward.iter().sum::<f64>() / projected.len() as f64;
        let lit = field.lit_pixels();
        let grid = PointGrid::new(&projected, lit, 4.0);
        let backward: Vec<f64> = lit.par_iter().map(|q| grid.nearest(*q)).collect();
        let backward = backward.iter().sum::<f64>() / lit.len() as f64;
        0.5 * (forward + backward)
    }

    fn eval(&self, params: &[f64; 6]) -> f64 {
        let moved = apply_pose_delta(&self.points, &self.center, &PoseDelta::from_array(*params));
        0.5 * (self.view_residual(&moved, 0) + self.view_residual(&moved, 1))
    }
}

/// Refines the object pose so that projected edge points align with the
/// observed binary feature maps of both views.
///
/// The objective is the mean symmetric distance between projected points and
/// the nearest lit pixels, averaged over the two views. It is minimized by
/// coordinate descent over the six pose parameters: each sweep runs a grid
/// search along one axis followed by golden-section refinement of the best
/// grid cell, with the grid half-width halving every sweep.
pub fn refine_pose(
    edge_points: &PointSet3D,
    observed: [&Projection; 2],
    initial: [&ProjectionMatrix; 2],
    start: PoseDelta,
    config: &RefineConfig,
) -> Result<RefineResult, GeometryError> {
    if edge_points.is_empty() {
        return Err(GeometryError::NoEdgePoints);
    }
    let fields = [
        DistanceField::new(observed[0]).ok_or(GeometryError::EmptyObservation(0))?,
        DistanceField::new(observed[1]).ok_or(GeometryError::EmptyObservation(1))?,
    ];
    let points: Vec<Vector3<f64>> = edge_points.iter().map(|p| p.mm).collect();
    let center = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let obj = Objective { points, center, cameras: initial, fields };

    let bounds = [
        config.angle_bound_deg,
        config.angle_bound_deg,
        config.angle_bound_deg,
        config.shift_bound_mm,
        config.shift_bound_mm,
        config.shift_bound_mm,
    ];
    let mut x = start.to_array();
    for i in 0..6 {
        x[i] = x[i].clamp(-bounds[i], bounds[i]);
    }
    let mut evaluations = 1usize;
    let initial_residual = obj.eval(&x);
    let mut fx = initial_residual;
    let g = config.grid_points.max(3);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;

    for sweep in 0..config.sweeps {
        let scale = 0.5f64.powi(sweep as i32);
        for axis in 0..6 {
            let half = bounds[axis] * scale;
            let lo = (x[axis] - half).max(-bounds[axis]);
            let hi = (x[axis] + half).min(bounds[axis]);
            let step = (hi - lo) / (g - 1) as f64;
            let mut best = (x[axis], fx);
            for k in 0..g {
                let mut y = x;
                y[axis] = lo + step * k as f64;
                let fy = obj.eval(&y);
                evaluations += 1;
                if fy < best.1 {
                    best = (y[axis], fy);
                }
            }
            // Golden-section search inside the bracketing grid cells.
            let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
            let at = |v: f64| {
                let mut y = x;
                y[axis] = v;
                y
            };
            let mut c = b - inv_phi * (b - a);
            let mut d = a + inv_phi * (b - a);
            let mut fc = obj.eval(&at(c));
            let mut fd = obj.eval(&at(d));
            evaluations += 2;
            for _ in 0..config.golden_iterations {
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - inv_phi * (b - a);
                    fc = obj.eval(&at(c));
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + inv_phi * (b - a);
                    fd = obj.eval(&at(d));
                }
                evaluations += 1;
            }
            for (v, fv) in [(c, fc), (d, fd)] {
                if fv < best.1 {
                    best = (v, fv);
                }
            }
            x[axis] = best.0;
            fx = best.1;
        }
    }

    let delta = PoseDelta::from_array(x);
    let at_bound = (0..6).any(|i| (x[i].abs() - bounds[i]).abs() <= 1e-9 * bounds[i].max(1.0));
    if at_bound {
        return Err(GeometryError::OutOfBounds { best: delta, residual: fx });
    }
    Ok(RefineResult { delta, residual_px: fx, initial_residual_px: initial_residual, evaluations })
}
