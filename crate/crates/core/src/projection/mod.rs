//! X-ray measurement simulation: projection images, ray-driven cone-beam
//! line integrals, Beer-Lambert conversion and feature splatting.

mod joseph;
mod render;

pub use joseph::{forward_project, forward_project_with, ray_integral, ProjectorConfig};
pub use render::{render_edge_projection, render_points_projection};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("the source at {source_mm:?} lies inside the volume")]
    SourceInsideVolume { source_mm: [f64; 3] },
    #[error("expected a {expected:?} projection, got {got:?}")]
    WrongKind { expected: ProjectionKind, got: ProjectionKind },
    #[error("intensity must be positive, got {value} at row {row}, col {col}")]
    NonPositiveIntensity { row: usize, col: usize, value: f64 },
    #[error("flat-field intensity must be positive")]
    NonPositiveFlatField,
    #[error("image shapes differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("invalid projection data: {0}")]
    InvalidData(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    Intensity,
    Attenuation,
    Probability,
}

/// 2D detector image, row-major with columns fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    rows: usize,
    cols: usize,
    pixel_pitch: f64,
    kind: ProjectionKind,
    data: Vec<f64>,
}

impl Projection {
    pub fn zeros(rows: usize, cols: usize, pixel_pitch: f64, kind: ProjectionKind) -> Self {
        Self { rows, cols, pixel_pitch, kind, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, pixel_pitch: f64, kind: ProjectionKind, value: f64) -> Self {
        Self { rows, cols, pixel_pitch, kind, data: vec![value; rows * cols] }
    }

    /// Validating constructor. Probability images must lie in `[0, 1]` and
    /// intensity images must be positive.
    pub fn from_data(
        rows: usize,
        cols: usize,
        pixel_pitch: f64,
        kind: ProjectionKind,
        data: Vec<f64>,
    ) -> Result<Self, ProjectionError> {
        if rows == 0 || cols == 0 {
            return Err(ProjectionError::InvalidData("rows and cols must be at least 1".into()));
        }
        if data.len() != rows * cols {
            return Err(ProjectionError::InvalidData(format!("expected {} values, got {}", rows * cols, data.len())));
        }
        if !(pixel_pitch > 0.0 && pixel_pitch.is_finite()) {
            return Err(ProjectionError::InvalidData(format!("pixel pitch must be positive, got {pixel_pitch}")));
        }
        for (i, &v) in data.iter().enumerate() {
            let ok = v.is_finite()
                && match kind {
                    ProjectionKind::Probability => (0.0..=1.0).contains(&v),
                    ProjectionKind::Intensity => v > 0.0,
                    ProjectionKind::Attenuation => true,
                };
            if !ok {
                return Err(ProjectionError::InvalidData(format!(
                    "value {v} at row {}, col {} is not valid for a {kind:?} image",
                    i / cols,
                    i % cols
                )));
            }
        }
        Ok(Self { rows, cols, pixel_pitch, kind, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    pub fn kind(&self) -> ProjectionKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: ProjectionKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Bilinear sample at continuous `(u, v)` = (column, row); zero outside.
    #[inline]
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let (c0, r0) = (u.floor(), v.floor());
        let (wu, wv) = (u - c0, v - r0);
        let (c0, r0) = (c0 as i64, r0 as i64);
        let px = |r: i64, c: i64| -> f64 {
            if r < 0 || c < 0 || r >= self.rows as i64 || c >= self.cols as i64 {
                0.0
            } else {
                self.data[r as usize * self.cols + c as usize]
            }
        };
        (1.0 - wv) * ((1.0 - wu) * px(r0, c0) + wu * px(r0, c0 + 1))
            + wv * ((1.0 - wu) * px(r0 + 1, c0) + wu * px(r0 + 1, c0 + 1))
    }

    /// Copy of the `height x width` window starting at `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Self {
        assert!(row + height <= self.rows && col + width <= self.cols, "crop window out of bounds");
        let mut data = Vec::with_capacity(height * width);
        for r in row..row + height {
            data.extend_from_slice(&self.data[r * self.cols + col..r * self.cols + col + width]);
        }
        Self { rows: height, cols: width, pixel_pitch: self.pixel_pitch, kind: self.kind, data }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn count_lit(&self) -> usize {
        self.data.iter().filter(|v| **v > 0.5).count()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { data: self.data.iter().map(|v| f(*v)).collect(), ..self.clone() }
    }
}

/// Flat-field (unattenuated) intensity: a scalar or a per-pixel image.
#[derive(Debug, Clone, Copy)]
pub enum FlatField<'a> {
    Scalar(f64),
    Image(&'a Projection),
}

/// Beer-Lambert inversion `ln(i0 / I)`, clamped below at 0 where the measured
/// intensity exceeds the flat field.
pub fn intensity_to_attenuation(img: &Projection, i0: FlatField<'_>) -> Result<Projection, ProjectionError> {
    if img.kind != ProjectionKind::Intensity {
        return Err(ProjectionError::WrongKind { expected: ProjectionKind::Intensity, got: img.kind });
    }
    if let FlatField::Image(f) = i0 {
        if f.rows != img.rows || f.cols != img.cols {
            return Err(ProjectionError::ShapeMismatch(img.rows, img.cols, f.rows, f.cols));
        }
    }
    let mut out = Projection::zeros(img.rows, img.cols, img.pixel_pitch, ProjectionKind::Attenuation);
    for (idx, (&i, o)) in img.data.iter().zip(out.data.iter_mut()).enumerate() {
        if !(i > 0.0) {
            return Err(ProjectionError::NonPositiveIntensity { row: idx / img.cols, col: idx % img.cols, value: i });
        }
        let flat = match i0 {
            FlatField::Scalar(s) => s,
            FlatField::Image(f) => f.data[idx],
        };
        if !(flat > 0.0) {
            return Err(ProjectionError::NonPositiveFlatField);
        }
        *o = (flat / i).ln().max(0.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beer_lambert() {
        let i0 = 1000.0;
        let mut img = Projection::filled(3, 4, 0.2, ProjectionKind::Intensity, i0);
        let a = intensity_to_attenuation(&img, FlatField::Scalar(i0)).unwrap();
        assert!(a.data().iter().all(|v| *v == 0.0));

        img.set(1, 2, i0 * (-2.0f64).exp());
        img.set(0, 0, i0 * 1.01);
        let a = intensity_to_attenuation(&img, FlatField::Scalar(i0)).unwrap();
        assert!((a.get(1, 2) - 2.0).abs() < 1e-12);
        assert_eq!(a.get(0, 0), 0.0);

        let flat = Projection::filled(3, 4, 0.2, ProjectionKind::Intensity, i0);
        let b = intensity_to_attenuation(&img, FlatField::Image(&flat)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn beer_lambert_errors() {
        let mut img = Projection::filled(2, 2, 0.2, ProjectionKind::Intensity, 5.0);
        img.data_mut()[3] = 0.0;
        assert!(matches!(
            intensity_to_attenuation(&img, FlatField::Scalar(10.0)),
            Err(ProjectionError::NonPositiveIntensity { row: 1, col: 1, .. })
        ));
        let att = Projection::zeros(2, 2, 0.2, ProjectionKind::Attenuation);
        assert!(matches!(intensity_to_attenuation(&att, FlatField::Scalar(1.0)), Err(ProjectionError::WrongKind { .. })));
        assert!(Projection::from_data(1, 2, 0.2, ProjectionKind::Probability, vec![0.5, 1.5]).is_err());
        assert!(Projection::from_data(1, 2, 0.2, ProjectionKind::Intensity, vec![0.5, 0.0]).is_err());
    }

    #[test]
    fn bilinear_sample() {
        let p = Projection::from_data(2, 2, 1.0, ProjectionKind::Attenuation, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((p.sample(0.5, 0.5) - 1.5).abs() < 1e-12);
        assert_eq!(p.sample(1.0, 1.0), 3.0);
        assert_eq!(p.sample(-1.0, 0.0), 0.0);
        assert!((p.sample(1.5, 1.0) - 1.5).abs() < 1e-12);
    }
}
