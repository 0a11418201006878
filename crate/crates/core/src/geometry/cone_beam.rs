use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, IntrinsicMatrix, Pose, ProjectionMatrix};

/// Rotation by `deg` degrees about `+x`.
pub fn rotation_x(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Rotation by `deg` degrees about `+y`.
pub fn rotation_y(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Rotation by `deg` degrees about `+z`.
pub fn rotation_z(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// One circular-trajectory cone-beam view.
///
/// `tilt` is `(pitch, roll, yaw)` in degrees, applied as a rotation of the
/// whole source/detector assembly about the rotation center:
/// `C = R_y(view_angle) · R_y(yaw) · R_x(pitch) · R_z(roll)`.
/// Because the assembly rotates about the iso-center, the central ray always
/// passes through the world origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeBeamGeometry {
    #[serde(rename = "sod_mm")]
    pub sod: f64,
    #[serde(rename = "sdd_mm")]
    pub sdd: f64,
    pub detector_rows: usize,
    pub detector_cols: usize,
    #[serde(rename = "pixel_pitch_mm")]
    pub pixel_pitch: f64,
    #[serde(rename = "view_angle_deg")]
    pub view_angle: f64,
    #[serde(rename = "tilt_deg", default)]
    pub tilt: [f64; 3],
}

impl ConeBeamGeometry {
    pub fn new(
        sod: f64,
        sdd: f64,
        detector_rows: usize,
        detector_cols: usize,
        pixel_pitch: f64,
        view_angle: f64,
    ) -> Result<Self, GeometryError> {
        let g = Self {
            sod,
            sdd,
            detector_rows,
            detector_cols,
            pixel_pitch,
            view_angle,
            tilt: [0.0; 3],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: String| Err(GeometryError::InvalidGeometry(m));
        if !(self.sod.is_finite() && self.sdd.is_finite()) {
            return bad("distances must be finite".into());
        }
        if !(self.sod > 0.0 && self.sod < self.sdd) {
            return bad(format!("need 0 < sod < sdd, got sod={} sdd={}", self.sod, self.sdd));
        }
        if !(self.pixel_pitch > 0.0 && self.pixel_pitch.is_finite()) {
            return bad(format!("pixel pitch must be positive, got {}", self.pixel_pitch));
        }
        if self.detector_rows == 0 || self.detector_cols == 0 {
            return bad("detector dimensions must be at least 1".into());
        }
        if !self.view_angle.is_finite() || self.tilt.iter().any(|t| !t.is_finite()) {
            return bad("angles must be finite".into());
        }
        Ok(())
    }

    /// Same geometry at a different view angle.
    pub fn at_angle(&self, view_angle: f64) -> Self {
        Self { view_angle, ..*self }
    }

    /// Same detector and distances with an arbitrary assembly orientation.
    ///
    /// The rotation is decomposed into `R_y(yaw) · R_x(pitch) · R_z(roll)`
    /// and stored as tilt with a zero view angle.
    pub fn with_orientation(&self, rotation: &Matrix3<f64>) -> Self {
        let pitch = (-rotation[(1, 2)]).clamp(-1.0, 1.0).asin();
        let roll = rotation[(1, 0)].atan2(rotation[(1, 1)]);
        let yaw = rotation[(0, 2)].atan2(rotation[(2, 2)]);
        Self {
            view_angle: 0.0,
            tilt: [pitch.to_degrees(), roll.to_degrees(), yaw.to_degrees()],
            ..*self
        }
    }

    /// Camera-to-world rotation of the source/detector assembly.
    pub fn orientation(&self) -> Matrix3<f64> {
        let [pitch, roll, yaw] = self.tilt;
        rotation_y(self.view_angle) * rotation_y(yaw) * rotation_x(pitch) * rotation_z(roll)
    }

    pub fn source(&self) -> Vector3<f64> {
        self.orientation() * Vector3::new(0.0, 0.0, -self.sod)
    }

    /// Unit vector from the rotation center towards the source.
    pub fn source_direction(&self) -> Vector3<f64> {
        -self.orientation().column(2).into_owned()
    }

    pub fn detector_center(&self) -> Vector3<f64> {
        self.orientation() * Vector3::new(0.0, 0.0, self.sdd - self.sod)
    }

    /// Detector column (`u`) and row (`v`) unit directions in world space.
    pub fn detector_axes(&self) -> (Vector3<f64>, Vector3<f64>) {
        let c = self.orientation();
        (c.column(0).into_owned(), c.column(1).into_owned())
    }

    /// Principal point in 0-indexed pixel-center coordinates (col, row).
    pub fn principal_point(&self) -> (f64, f64) {
        (
            (self.detector_cols as f64 - 1.0) / 2.0,
            (self.detector_rows as f64 - 1.0) / 2.0,
        )
    }

    /// World position of detector coordinate `(u, v)` (column, row).
    pub fn pixel_position(&self, u: f64, v: f64) -> Vector3<f64> {
        let (cu, cv) = self.principal_point();
        let (eu, ev) = self.detector_axes();
        self.detector_center()
            + eu * ((u - cu) * self.pixel_pitch)
            + ev * ((v - cv) * self.pixel_pitch)
    }

    pub fn magnification(&self) -> f64 {
        self.sdd / self.sod
    }

    pub fn intrinsics(&self) -> IntrinsicMatrix {
        let f = self.sdd / self.pixel_pitch;
        let (cu, cv) = self.principal_point();
        IntrinsicMatrix {
            focal_u: f,
            focal_v: f,
            principal_u: cu,
            principal_v: cv,
            skew: 0.0,
        }
    }

    /// World-to-camera pose: `x_cam = Cᵀ x + (0, 0, sod)`.
    pub fn pose(&self) -> Pose {
        Pose::new_unchecked(self.orientation().transpose(), Vector3::new(0.0, 0.0, self.sod))
    }

    /// `P = K[R|t]` for this view.
    pub fn projection_matrix(&self) -> Result<ProjectionMatrix, GeometryError> {
        self.validate()?;
        Ok(ProjectionMatrix::from_camera(&self.intrinsics(), &self.pose()))
    }

    /// Depth of a world point along the optical axis, measured from the source.
    pub fn depth(&self, x: &Vector3<f64>) -> f64 {
        self.sod - x.dot(&self.source_direction())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_scale() -> ConeBeamGeometry {
        ConeBeamGeometry::new(290.0, 923.0, 2000, 2000, 0.2, 0.0).unwrap()
    }

    #[test]
    fn rejects_invalid() {
        assert!(ConeBeamGeometry::new(923.0, 290.0, 10, 10, 0.2, 0.0).is_err());
        assert!(ConeBeamGeometry::new(290.0, 290.0, 10, 10, 0.2, 0.0).is_err());
        assert!(ConeBeamGeometry::new(290.0, 923.0, 10, 10, 0.0, 0.0).is_err());
        assert!(ConeBeamGeometry::new(290.0, 923.0, 0, 10, 0.2, 0.0).is_err());
    }

    #[test]
    fn origin_hits_detector_center() {
        let p = full_scale().projection_matrix().unwrap();
        let (u, v) = p.project(&Vector3::zeros()).unwrap();
        assert!((u - 999.5).abs() < 1e-9 && (v - 999.5).abs() < 1e-9);
    }

    #[test]
    fn iso_center_magnification() {
        let p = full_scale().projection_matrix().unwrap();
        let (u, v) = p.project(&Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let expected = 923.0 / 290.0 / 0.2;
        assert!((u - 999.5 - expected).abs() < 1e-9, "{u}");
        assert!((v - 999.5).abs() < 1e-9);
        assert!((expected - 15.91).abs() < 0.01);
    }

    #[test]
    fn central_ray_maps_to_principal_point() {
        for angle in [-29.0, 0.0, 32.0, 117.0] {
            let mut g = full_scale().at_angle(angle);
            g.tilt = [1.5, -0.7, 2.0];
            let p = g.projection_matrix().unwrap();
            let s = g.source();
            for lambda in [0.1, 0.5, 0.9, 1.3] {
                let x = s + (g.detector_center() - s) * lambda;
                let (u, v) = p.project(&x).unwrap();
                assert!((u - 999.5).abs() < 1e-6 && (v - 999.5).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn orientation_round_trip() {
        let mut g = full_scale().at_angle(40.0);
        g.tilt = [10.0, -20.0, 5.0];
        let r = g.orientation();
        let h = g.with_orientation(&r);
        assert!((h.orientation() - r).norm() < 1e-12);
    }

    #[test]
    fn positive_angle_is_counterclockwise_from_above() {
        // Source starts on -z; a +90° turn about +y carries it to -x.
        let s = full_scale().at_angle(90.0).source();
        assert!((s - Vector3::new(-290.0, 0.0, 0.0)).norm() < 1e-9);
    }
}
