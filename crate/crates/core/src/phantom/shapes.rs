use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{rotation_x, rotation_y, rotation_z};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Box,
    RoundedBox,
    /// Axis along local `y`; diameter `min(dx, dz)`, height `dy`.
    Cylinder,
    /// Right triangular prism: the `x`-`y` cross-section is the triangle
    /// `(-hx, -hy), (hx, -hy), (-hx, hy)`, extruded along `z`.
    Wedge,
}

/// A simple solid placed in world space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub center_mm: [f64; 3],
    /// `(pitch, roll, yaw)` in degrees: `R = R_y(yaw) · R_x(pitch) · R_z(roll)`.
    #[serde(default)]
    pub rotation_deg: [f64; 3],
    /// Full extents along the local axes.
    pub dimensions_mm: [f64; 3],
    #[serde(default)]
    pub corner_radius_mm: f64,
    pub attenuation: f64,
}

/// Straight pieces of analytic edge (creases and corners) in world space.
/// A corner on its own is a zero-length segment.
pub type Segment = (Vector3<f64>, Vector3<f64>);

const CIRCLE_SEGMENTS: usize = 64;

impl ShapeSpec {
    pub fn rotation(&self) -> Matrix3<f64> {
        let [p, r, y] = self.rotation_deg;
        rotation_y(y) * rotation_x(p) * rotation_z(r)
    }

    fn half(&self) -> Vector3<f64> {
        Vector3::from(self.dimensions_mm) / 2.0
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dimensions_mm.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(format!("dimensions must be positive, got {:?}", self.dimensions_mm));
        }
        let min_half = self.dimensions_mm.iter().copied().fold(f64::INFINITY, f64::min) / 2.0;
        if !(self.corner_radius_mm >= 0.0 && self.corner_radius_mm < min_half) {
            return Err(format!(
                "corner radius {} must be in [0, {min_half})",
                self.corner_radius_mm
            ));
        }
        if !self.attenuation.is_finite() {
            return Err("attenuation must be finite".into());
        }
        Ok(())
    }

    pub fn to_local(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().transpose() * (x - Vector3::from(self.center_mm))
    }

    pub fn to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + Vector3::from(self.center_mm)
    }

    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        self.contains_local(&self.to_local(x), &self.rotation())
    }

    fn contains_local(&self, p: &Vector3<f64>, _r: &Matrix3<f64>) -> bool {
        let h = self.half();
        match self.kind {
            ShapeKind::Box => p.x.abs() <= h.x && p.y.abs() <= h.y && p.z.abs() <= h.z,
            ShapeKind::RoundedBox => {
                let r = self.corner_radius_mm;
                let q = p.abs() - h.add_scalar(-r);
                let outside = q.map(|v| v.max(0.0)).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                outside + inside - r <= 0.0
            }
            ShapeKind::Cylinder => {
                let rad = h.x.min(h.z);
                p.x * p.x + p.z * p.z <= rad * rad && p.y.abs() <= h.y
            }
            ShapeKind::Wedge => {
                p.x.abs() <= h.x && p.y.abs() <= h.y && p.z.abs() <= h.z && p.x / h.x + p.y / h.y <= 0.0
            }
        }
    }

    /// Corner (trihedral vertex) positions in world space.
    pub fn corners(&self) -> Vec<Vector3<f64>> {
        let h = self.half();
        let local: Vec<Vector3<f64>> = match self.kind {
            ShapeKind::Box => box_corners(&h),
            ShapeKind::RoundedBox => {
                let r = self.corner_radius_mm;
                let c = h.add_scalar(-r);
                box_corners(&c)
                    .into_iter()
                    .map(|v| v + v.map(|s| s.signum()) * (r / 3f64.sqrt()))
                    .collect()
            }
            ShapeKind::Cylinder => vec![],
            ShapeKind::Wedge => {
                let tri = [(-h.x, -h.y), (h.x, -h.y), (-h.x, h.y)];
                [-h.z, h.z]
                    .iter()
                    .flat_map(|&z| tri.iter().map(move |&(x, y)| Vector3::new(x, y, z)))
                    .collect()
            }
        };
        local.iter().map(|p| self.to_world(p)).collect()
    }

    /// Analytic edge pieces in world space.
    ///
    /// For rounded boxes the crease is replaced by the mid-line of each
    /// rounded edge and the corner by the diagonal point of each corner
    /// sphere.
    pub fn feature_segments(&self) -> Vec<Segment> {
        let h = self.half();
        let local: Vec<Segment> = match self.kind {
            ShapeKind::Box => box_edges(&box_corners(&h)),
            ShapeKind::RoundedBox => {
                let r = self.corner_radius_mm;
                let inset = r - r / 2f64.sqrt();
                let core = h.add_scalar(-r);
                let mut segs = Vec::with_capacity(20);
                for axis in 0..3 {
                    let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
                    for sb in [-1.0, 1.0] {
                        for sc in [-1.0, 1.0] {
                            let mut a0 = Vector3::zeros();
                            a0[axis] = -core[axis];
                            a0[b] = sb * (h[b] - inset);
                            a0[c] = sc * (h[c] - inset);
                            let mut a1 = a0;
                            a1[axis] = core[axis];
                            segs.push((a0, a1));
                        }
                    }
                }
                let corners: Vec<Vector3<f64>> = box_corners(&core)
                    .into_iter()
                    .map(|v| v + v.map(|s| s.signum()) * (r / 3f64.sqrt()))
                    .collect();
                segs.extend(corners.into_iter().map(|c| (c, c)));
                segs
            }
            ShapeKind::Cylinder => {
                let rad = h.x.min(h.z);
                let mut segs = Vec::with_capacity(2 * CIRCLE_SEGMENTS);
                for y in [-h.y, h.y] {
                    for i in 0..CIRCLE_SEGMENTS {
                        let a0 = i as f64 / CIRCLE_SEGMENTS as f64 * std::f64::consts::TAU;
                        let a1 = (i + 1) as f64 / CIRCLE_SEGMENTS as f64 * std::f64::consts::TAU;
                        segs.push((
                            Vector3::new(rad * a0.cos(), y, rad * a0.sin()),
                            Vector3::new(rad * a1.cos(), y, rad * a1.sin()),
                        ));
                    }
                }
                segs
            }
            ShapeKind::Wedge => {
                let tri = [(-h.x, -h.y), (h.x, -h.y), (-h.x, h.y)];
                let v = |i: usize, z: f64| Vector3::new(tri[i].0, tri[i].1, z);
                let mut segs = vec![];
                for z in [-h.z, h.z] {
                    for i in 0..3 {
                        segs.push((v(i, z), v((i + 1) % 3, z)));
                    }
                }
                for i in 0..3 {
                    segs.push((v(i, -h.z), v(i, h.z)));
                }
                segs
            }
        };
        local.iter().map(|(a, b)| (self.to_world(a), self.to_world(b))).collect()
    }

    /// Radius of a sphere about the center that encloses the shape.
    pub fn bounding_radius(&self) -> f64 {
        self.half().norm()
    }

    /// World-space corners of the local bounding box.
    pub fn bounding_corners(&self) -> Vec<Vector3<f64>> {
        box_corners(&self.half()).iter().map(|p| self.to_world(p)).collect()
    }
}

pub(crate) fn box_corners(h: &Vector3<f64>) -> Vec<Vector3<f64>> {
    (0..8)
        .map(|i| {
            Vector3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            )
        })
        .collect()
}

/// The 12 edges of a box given its corners in [`box_corners`] order.
pub(crate) fn box_edges(c: &[Vector3<f64>]) -> Vec<Segment> {
    let mut out = Vec::with_capacity(12);
    for i in 0..8usize {
        for bit in [1usize, 2, 4] {
            if i & bit == 0 {
                out.push((c[i], c[i | bit]));
            }
        }
    }
    out
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(kind: ShapeKind) -> ShapeSpec {
        ShapeSpec {
            kind,
            center_mm: [1.0, -2.0, 0.5],
            rotation_deg: [10.0, 20.0, -30.0],
            dimensions_mm: [4.0, 6.0, 8.0],
            corner_radius_mm: 0.0,
            attenuation: 0.2,
        }
    }

    #[test]
    fn feature_counts() {
        assert_eq!(shape(ShapeKind::Box).feature_segments().len(), 12);
        assert_eq!(shape(ShapeKind::Box).corners().len(), 8);
        assert_eq!(shape(ShapeKind::Wedge).feature_segments().len(), 9);
        assert_eq!(shape(ShapeKind::Wedge).corners().len(), 6);
        assert!(shape(ShapeKind::Cylinder).corners().is_empty());
    }

    #[test]
    fn corners_lie_on_boundary() {
        for kind in [ShapeKind::Box, ShapeKind::Wedge] {
            let s = shape(kind);
            // The triangle centroid is interior for both shapes.
            let inner = s.to_world(&Vector3::new(-2.0 / 3.0, -1.0, 0.0));
            for c in s.corners() {
                assert!(s.contains(&(c + (inner - c) * 1e-6)));
                assert!(!s.contains(&(c + (c - inner) * 1e-3)));
            }
        }
        let mut r = shape(ShapeKind::RoundedBox);
        r.corner_radius_mm = 1.0;
        for c in r.corners() {
            let inward = Vector3::from(r.center_mm) - c;
            assert!(r.contains(&(c + inward * 1e-6)));
            assert!(!r.contains(&(c - inward * 1e-3)));
        }
    }

    #[test]
    fn zero_radius_rounded_box_is_a_box() {
        let b = shape(ShapeKind::Box);
        let r = ShapeSpec { kind: ShapeKind::RoundedBox, ..b };
        for (p, q) in b.corners().iter().zip(r.corners()) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn validation() {
        let mut s = shape(ShapeKind::RoundedBox);
        s.corner_radius_mm = 2.0;
        assert!(s.validate().is_err());
        s.corner_radius_mm = 1.9;
        assert!(s.validate().is_ok());
        s.dimensions_mm[1] = 0.0;
        assert!(s.validate().is_err());
    }
}
