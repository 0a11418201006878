//! Named 3D feature points.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::volume::VolumeSpec;

/// One feature point, in world millimeters and in (fractional) voxel indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub label: String,
    pub mm: Vector3<f64>,
    pub voxels: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PointRecord {
    label: String,
    mm: [f64; 3],
    voxels: [f64; 3],
}

/// Labeled 3D points. Serialized as a JSON array of
/// `{label, mm: [x, y, z], voxels: [i, j, k]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<PointRecord>", into = "Vec<PointRecord>")]
pub struct PointSet3D {
    points: Vec<LabeledPoint>,
}

impl From<Vec<PointRecord>> for PointSet3D {
    fn from(v: Vec<PointRecord>) -> Self {
        Self {
            points: v
                .into_iter()
                .map(|r| LabeledPoint { label: r.label, mm: r.mm.into(), voxels: r.voxels.into() })
                .collect(),
        }
    }
}

impl From<PointSet3D> for Vec<PointRecord> {
    fn from(s: PointSet3D) -> Self {
        s.points
            .into_iter()
            .map(|p| PointRecord { label: p.label, mm: p.mm.into(), voxels: p.voxels.into() })
            .collect()
    }
}

impl PointSet3D {
    pub fn new() -> Self {
        Self::default()
    }

    /// Points given in millimeters; voxel coordinates derived from `grid`.
    pub fn from_mm(grid: &VolumeSpec, points: impl IntoIterator<Item = (String, Vector3<f64>)>) -> Self {
        Self {
            points: points
                .into_iter()
                .map(|(label, mm)| LabeledPoint { voxels: grid.mm_to_voxel(&mm), label, mm })
                .collect(),
        }
    }

    /// Points given in voxel coordinates; millimeters derived from `grid`.
    pub fn from_voxels(grid: &VolumeSpec, points: impl IntoIterator<Item = (String, Vector3<f64>)>) -> Self {
        Self {
            points: points
                .into_iter()
                .map(|(label, v)| LabeledPoint { mm: grid.voxel_to_mm(&v), label, voxels: v })
                .collect(),
        }
    }

    pub fn push(&mut self, p: LabeledPoint) {
        self.points.push(p);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledPoint> {
        self.points.iter()
    }

    pub fn get(&self, i: usize) -> Option<&LabeledPoint> {
        self.points.get(i)
    }

    pub fn find(&self, label: &str) -> Option<&LabeledPoint> {
        self.points.iter().find(|p| p.label == label)
    }

    pub fn as_slice(&self) -> &[LabeledPoint] {
        &self.points
    }
}

impl FromIterator<LabeledPoint> for PointSet3D {
    fn from_iter<I: IntoIterator<Item = LabeledPoint>>(iter: I) -> Self {
        Self { points: iter.into_iter().collect() }
    }
}

impl<'a> IntoIterator for &'a PointSet3D {
    type Item = &'a LabeledPoint;
    type IntoIter = std::slice::Iter<'a, LabeledPoint>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}
