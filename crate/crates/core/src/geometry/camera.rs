use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Pinhole intrinsics in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicMatrix {
    pub focal_u: f64,
    pub focal_v: f64,
    pub principal_u: f64,
    pub principal_v: f64,
    #[serde(default)]
    pub skew: f64,
}

impl IntrinsicMatrix {
    pub fn new(
        focal_u: f64,
        focal_v: f64,
        principal_u: f64,
        principal_v: f64,
    ) -> Result<Self, GeometryError> {
        let k = Self { focal_u, focal_v, principal_u, principal_v, skew: 0.0 };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.focal_u > 0.0 && self.focal_v > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got ({}, {})",
                self.focal_u, self.focal_v
            )));
        }
        if ![self.principal_u, self.principal_v, self.skew].iter().all(|x| x.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("non-finite entry".into()));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.focal_u,
            self.skew,
            self.principal_u,
            0.0,
            self.focal_v,
            self.principal_v,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn inverse(&self) -> Matrix3<f64> {
        let (fu, fv, s) = (self.focal_u, self.focal_v, self.skew);
        let (cu, cv) = (self.principal_u, self.principal_v);
        Matrix3::new(
            1.0 / fu,
            -s / (fu * fv),
            (s * cv - cu * fv) / (fu * fv),
            0.0,
            1.0 / fv,
            -cv / fv,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// Rigid world-to-camera transform `x_cam = R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

const ROTATION_TOL: f64 = 1e-9;

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = (rotation.determinant() - 1.0).abs();
        let residual = ortho.max(det);
        if !(residual <= ROTATION_TOL) {
            return Err(GeometryError::NotARotation(residual));
        }
        if translation.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::InvalidGeometry("non-finite translation".into()));
        }
        Ok(Self { rotation, translation })
    }

    pub(crate) fn new_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new_unchecked(Matrix3::identity(), Vector3::zeros())
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Rotation angle in degrees (axis-angle magnitude).
    pub fn rotation_angle_deg(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    }

    /// Camera center in the reference frame, `-Rᵀ t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn with_translation(&self, translation: Vector3<f64>) -> Self {
        Self { translation, ..*self }
    }
}

/// 3×4 camera matrix, scale-normalized so the left 3 entries of the last row
/// have unit norm and a positive orientation (positive depth in front).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix {
    entries: Matrix3x4<f64>,
}

impl ProjectionMatrix {
    pub fn new(entries: Matrix3x4<f64>) -> Result<Self, GeometryError> {
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::InvalidGeometry("non-finite camera matrix".into()));
        }
        let left = entries.fixed_view::<3, 3>(0, 0).into_owned();
        let det = left.determinant();
        let n = entries.fixed_view::<1, 3>(2, 0).norm();
        if n < 1e-300 || det.abs() < 1e-300 {
            return Err(GeometryError::InvalidGeometry("camera matrix left block is singular".into()));
        }
        let s = det.signum() / n;
        Ok(Self { entries: entries * s })
    }

    pub fn from_camera(k: &IntrinsicMatrix, pose: &Pose) -> Self {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(pose.rotation());
        rt.set_column(3, pose.translation());
        Self::new(k.matrix() * rt).expect("valid intrinsics and rotation give a finite camera")
    }

    pub fn entries(&self) -> &Matrix3x4<f64> {
        &self.entries
    }

    /// Row-major entries.
    pub fn to_rows(&self) -> [[f64; 4]; 3] {
        let mut out = [[0.0; 4]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.entries[(r, c)];
            }
        }
        out
    }

    pub fn from_rows(rows: [[f64; 4]; 3]) -> Result<Self, GeometryError> {
        Self::new(Matrix3x4::from_fn(|r, c| rows[r][c]))
    }

    pub fn homogeneous(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.entries * Vector4::new(x.x, x.y, x.z, 1.0)
    }

    /// Dehomogenized pixel coordinates `(u, v)` of `x`.
    pub fn project(&self, x: &Vector3<f64>) -> Result<(f64, f64), GeometryError> {
        let h = self.homogeneous(x);
        if h.z.abs() <= 1e-12 {
            return Err(GeometryError::PointAtInfinity(h.z));
        }
        Ok((h.x / h.z, h.y / h.z))
    }

    /// Signed depth of `x` (positive in front of the camera).
    pub fn depth(&self, x: &Vector3<f64>) -> f64 {
        self.homogeneous(x).z
    }

    pub fn camera_center(&self) -> Vector3<f64> {
        let left = self.entries.fixed_view::<3, 3>(0, 0).into_owned();
        let p4 = self.entries.column(3).into_owned();
        -(left.try_inverse().expect("left block is invertible by construction") * p4)
    }
}
