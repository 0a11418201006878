//! Voxel grids.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("invalid volume spec: {0}")]
    InvalidSpec(String),
    #[error("data length {got} does not match {nx}x{ny}x{nz}")]
    LengthMismatch { got: usize, nx: usize, ny: usize, nz: usize },
    #[error("non-finite value at voxel index {0}")]
    NonFinite(usize),
    #[error("grids differ: {0}")]
    GridMismatch(String),
}

/// Grid layout: dimensions, isotropic pitch, and the world position of the
/// center of voxel `(0, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    #[serde(rename = "voxel_pitch_mm")]
    pub voxel_pitch: f64,
    #[serde(rename = "origin_mm")]
    pub origin: [f64; 3],
}

impl VolumeSpec {
    pub fn new(dims: [usize; 3], voxel_pitch: f64, origin: [f64; 3]) -> Result<Self, VolumeError> {
        let s = Self { nx: dims[0], ny: dims[1], nz: dims[2], voxel_pitch, origin };
        s.validate()?;
        Ok(s)
    }

    /// Grid centered on the world origin.
    pub fn centered(dims: [usize; 3], voxel_pitch: f64) -> Result<Self, VolumeError> {
        let origin = dims.map(|n| -(n as f64 - 1.0) / 2.0 * voxel_pitch);
        Self::new(dims, voxel_pitch, origin)
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(VolumeError::InvalidSpec("dimensions must be at least 1".into()));
        }
        if !(self.voxel_pitch > 0.0 && self.voxel_pitch.is_finite()) {
            return Err(VolumeError::InvalidSpec(format!("voxel pitch must be positive, got {}", self.voxel_pitch)));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(VolumeError::InvalidSpec("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index, x fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        (idx % self.nx, (idx / self.nx) % self.ny, idx / (self.nx * self.ny))
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.voxel_to_mm(&Vector3::new(i as f64, j as f64, k as f64))
    }

    pub fn voxel_to_mm(&self, v: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from(self.origin) + v * self.voxel_pitch
    }

    pub fn mm_to_voxel(&self, x: &Vector3<f64>) -> Vector3<f64> {
        (x - Vector3::from(self.origin)) / self.voxel_pitch
    }

    /// World-space center of the grid.
    pub fn center(&self) -> Vector3<f64> {
        self.voxel_to_mm(&Vector3::new(
            (self.nx as f64 - 1.0) / 2.0,
            (self.ny as f64 - 1.0) / 2.0,
            (self.nz as f64 - 1.0) / 2.0,
        ))
    }

    /// Axis-aligned world bounds of the voxel footprints.
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let h = self.voxel_pitch / 2.0;
        let lo = Vector3::from(self.origin).add_scalar(-h);
        let hi = self.voxel_to_mm(&Vector3::new(
            (self.nx - 1) as f64,
            (self.ny - 1) as f64,
            (self.nz - 1) as f64,
        ))
        .add_scalar(h);
        (lo, hi)
    }
}

/// 3D scalar grid (attenuation, back-projected evidence or probability).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    spec: VolumeSpec,
    data: Vec<f64>,
}

impl Volume {
    pub fn zeros(spec: VolumeSpec) -> Self {
        Self { data: vec![0.0; spec.len()], spec }
    }

    pub fn from_data(spec: VolumeSpec, data: Vec<f64>) -> Result<Self, VolumeError> {
        spec.validate()?;
        if data.len() != spec.len() {
            return Err(VolumeError::LengthMismatch { got: data.len(), nx: spec.nx, ny: spec.ny, nz: spec.nz });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite(i));
        }
        Ok(Self { spec, data })
    }

    pub fn from_fn(spec: VolumeSpec, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let data = (0..spec.len())
            .map(|idx| {
                let (i, j, k) = spec.unindex(idx);
                f(i, j, k)
            })
            .collect();
        Self { spec, data }
    }

    pub fn spec(&self) -> &VolumeSpec {
        &self.spec
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
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.spec.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.spec.index(i, j, k);
        self.data[idx] = v;
    }

    /// Value at signed voxel indices, zero outside the grid.
    #[inline]
    pub fn get_or_zero(&self, i: i64, j: i64, k: i64) -> f64 {
        if i < 0 || j < 0 || k < 0 {
            return 0.0;
        }
        let (i, j, k) = (i as usize, j as usize, k as usize);
        if i >= self.spec.nx || j >= self.spec.ny || k >= self.spec.nz {
            return 0.0;
        }
        self.get(i, j, k)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index triple of the (first) maximum voxel.
    pub fn argmax(&self) -> (usize, usize, usize) {
        let mut best = 0;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        self.spec.unindex(best)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { spec: self.spec, data: self.data.iter().map(|v| f(*v)).collect() }
    }

    /// Elementwise `self + other`, requiring identical grids.
    pub fn add(&self, other: &Volume) -> Result<Self, VolumeError> {
        if self.spec != other.spec {
            return Err(VolumeError::GridMismatch(format!("{:?} vs {:?}", self.spec, other.spec)));
        }
        Ok(Self { spec: self.spec, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() })
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trip() {
        let s = VolumeSpec::centered([3, 4, 5], 0.5).unwrap();
        for idx in 0..s.len() {
            let (i, j, k) = s.unindex(idx);
            assert_eq!(s.index(i, j, k), idx);
        }
        assert!(s.center().norm() < 1e-12);
        let v = Vector3::new(1.25, 2.0, 3.5);
        assert!((s.mm_to_voxel(&s.voxel_to_mm(&v)) - v).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_data() {
        let s = VolumeSpec::centered([2, 2, 2], 1.0).unwrap();
        assert!(Volume::from_data(s, vec![0.0; 7]).is_err());
        let mut d = vec![0.0; 8];
        d[3] = f64::NAN;
        assert!(matches!(Volume::from_data(s, d), Err(VolumeError::NonFinite(3))));
        assert!(VolumeSpec::centered([0, 2, 2], 1.0).is_err());
        assert!(VolumeSpec::centered([2, 2, 2], 0.0).is_err());
    }
}
