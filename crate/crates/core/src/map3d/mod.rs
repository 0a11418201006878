//! 3D feature localization from back-projected feature maps: a trainable
//! volume classifier, a rule-based two-view coincidence detector, and
//! extraction of discrete points.

mod components;
mod skeleton;

pub use components::{connected_components, extract_points};
pub use skeleton::{corner_candidates, neighbour_counts, prune_spurs, skeletonize};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{self, Architecture, Dims, Model, NnError, Sample, TrainConfig};
use crate::phantom::VolumePair;
use crate::points::PointSet3D;
use crate::volume::{Volume, VolumeError};

#[derive(Debug, Error)]
pub enum MapError {
    #[error("back-projected evidence is all zero")]
    EmptyEvidence,
    #[error("volume grids differ")]
    GridMismatch,
    #[error("back-projection has negative values")]
    NegativeEvidence,
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("expected a 3D network")]
    NotThreeDimensional,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// 3D encoder-decoder voxel classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeClassifier {
    pub model: Model,
}

impl VolumeClassifier {
    pub fn new(depth: usize, base_channels: usize, seed: u64) -> Result<Self, MapError> {
        Ok(Self { model: Model::new(Architecture::new_3d(depth, base_channels), seed)? })
    }

    pub fn from_model(model: Model) -> Result<Self, MapError> {
        if model.arch.dims != Dims::Three {
            return Err(MapError::NotThreeDimensional);
        }
        model.validate()?;
        Ok(Self { model })
    }

    pub fn load(path: &Path) -> Result<Self, MapError> {
        Self::from_model(nn::checkpoint::load(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), MapError> {
        Ok(nn::checkpoint::save(&self.model, path)?)
    }

    /// Per-voxel feature probability for a summed back-projection.
    pub fn localize(&self, bp: &Volume) -> Result<Volume, MapError> {
        if bp.data().iter().any(|v| *v < 0.0) {
            return Err(MapError::NegativeEvidence);
        }
        let s = bp.spec();
        // Volume data is x-fastest, matching the network's [d, h, w] = [z, y, x].
        let p = self.model.predict([s.nz, s.ny, s.nx], bp.data())?;
        Ok(Volume::from_data(*s, p)?)
    }

    pub fn loss_and_gradient(&self, batch: &[VolumePair], pos_weight: f64) -> Result<(f64, Vec<f64>), MapError> {
        let samples = to_samples(batch);
        let refs: Vec<&Sample> = samples.iter().collect();
        let (l, g, _) = nn::loss_and_gradient(&self.model, &refs, pos_weight)?;
        Ok((l, g))
    }

    pub fn train(&mut self, pairs: &[VolumePair], cfg: &TrainConfig) -> Result<Vec<f64>, MapError> {
        Ok(nn::train(&mut self.model, &to_samples(pairs), cfg)?)
    }
}

pub fn to_samples(pairs: &[VolumePair]) -> Vec<Sample> {
    pairs
        .iter()
        .map(|p| {
            let s = p.input.spec();
            Sample { spatial: [s.nz, s.ny, s.nx], input: p.input.data().to_vec(), target: p.target.data().to_vec() }
        })
        .collect()
}

/// Voxels where both single-view back-projections reach `tau` times their
/// own maximum.
pub fn coincidence_localize(bp_l: &Volume, bp_r: &Volume, tau: f64) -> Result<Volume, MapError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(MapError::InvalidThreshold(tau));
    }
    if bp_l.spec() != bp_r.spec() {
        return Err(MapError::GridMismatch);
    }
    let (ml, mr) = (bp_l.max(), bp_r.max());
    if !(ml > 0.0 && mr > 0.0) {
        return Err(MapError::EmptyEvidence);
    }
    let data = bp_l
        .data()
        .iter()
        .zip(bp_r.data())
        .map(|(l, r)| if *l >= tau * ml && *r >= tau * mr { 1.0 } else { 0.0 })
        .collect();
    Ok(Volume::from_data(*bp_l.spec(), data)?)
}

/// How discrete feature points are pulled out of a binary feature volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointExtraction {
    pub min_cluster: usize,
    /// Thin to a skeleton and keep its endpoints and junctions.
    pub corners: bool,
    /// Also report the centroid of every component whose bounding box is at
    /// most this many voxels across (compact blobs such as holes); 0 = off.
    pub compact_extent: usize,
    /// Skeleton branches shorter than this are pruned before taking
    /// endpoints and junctions; 0 = off.
    #[serde(default)]
    pub prune_len: usize,
    /// Candidates closer than this (voxels, single linkage) are merged into
    /// their centroid; 0 = off.
    #[serde(default)]
    pub merge_radius: f64,
}

impl Default for PointExtraction {
    fn default() -> Self {
        Self { min_cluster: 3, corners: true, compact_extent: 0, prune_len: 0, merge_radius: 0.0 }
    }
}

/// Single-linkage merge of points closer than `radius` voxels; each group
/// is replaced by its centroid. Output order follows the first member.
pub fn merge_points(points: &PointSet3D, grid: &crate::volume::VolumeSpec, radius: f64) -> PointSet3D {
    let pts: Vec<_> = points.iter().map(|p| p.voxels).collect();
    let mut parent: Vec<usize> = (0..pts.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            if (pts[a] - pts[b]).norm() < radius {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<(usize, nalgebra::Vector3<f64>, usize)> = Vec::new();
    for i in 0..pts.len() {
        let r = find(&mut parent, i);
        match groups.iter_mut().find(|g| g.0 == r) {
            Some(g) => {
                g.1 += pts[i];
                g.2 += 1;
            }
            None => groups.push((r, pts[i], 1)),
        }
    }
    PointSet3D::from_voxels(grid, groups.into_iter().enumerate().map(|(n, (_, s, c))| (format!("p{n}"), s / c as f64)))
}

/// Candidate feature points of a binary volume: centroids of skeleton
/// endpoint/junction clusters and, optionally, of compact components.
pub fn feature_points(binary: &Volume, cfg: &PointExtraction) -> PointSet3D {
    let spec = *binary.spec();
    let mut out = PointSet3D::new();
    let mut push = |set: PointSet3D| {
        for p in set.iter() {
            let mut p = p.clone();
            p.label = format!("p{}", out.len());
            out.push(p);
        }
    };
    let kept = {
        let mut v = Volume::zeros(spec);
        for c in connected_components(binary).iter().filter(|c| c.len() >= cfg.min_cluster.max(1)) {
            for &i in c {
                v.data_mut()[i] = 1.0;
            }
        }
        v
    };
    if cfg.corners {
        let mut skel = skeletonize(&kept);
        if cfg.prune_len > 0 {
            skel = prune_spurs(&skel, cfg.prune_len);
        }
        push(extract_points(&corner_candidates(&skel), 1));
    } else {
        push(extract_points(&kept, 1));
    }
    if cfg.compact_extent > 0 {
        let mut compact = Volume::zeros(spec);
        for c in connected_components(&kept) {
            let mut lo = [usize::MAX; 3];
            let mut hi = [0usize; 3];
            for &i in &c {
                let (x, y, z) = spec.unindex(i);
                for (a, v) in [x, y, z].into_iter().enumerate() {
                    lo[a] = lo[a].min(v);
                    hi[a] = hi[a].max(v);
                }
            }
            if (0..3).all(|a| hi[a] - lo[a] < cfg.compact_extent) {
                for &i in &c {
                    compact.data_mut()[i] = 1.0;
                }
            }
        }
        push(extract_points(&compact, 1));
    }
    if cfg.merge_radius > 0.0 {
        out = merge_points(&out, &spec, cfg.merge_radius);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeSpec;

    #[test]
    fn coincidence_rules() {
        let spec = VolumeSpec::centered([4, 4, 4], 1.0).unwrap();
        let a = Volume::from_fn(spec, |i, _, _| i as f64);
        let b = Volume::from_fn(spec, |_, j, _| j as f64);
        let ab = coincidence_localize(&a, &b, 0.5).unwrap();
        assert_eq!(ab, coincidence_localize(&b, &a, 0.5).unwrap());
        assert_eq!(ab.count_nonzero(), 2 * 2 * 4);
        let z = Volume::zeros(spec);
        assert!(matches!(coincidence_localize(&z, &b, 0.5), Err(MapError::EmptyEvidence)));
        assert!(matches!(coincidence_localize(&a, &b, 1.5), Err(MapError::InvalidThreshold(_))));
    }

    #[test]
    fn zero_head_localizes_half() {
        let mut c = VolumeClassifier::new(1, 2, 0).unwrap();
        c.model.zero_head();
        let spec = VolumeSpec::centered([4, 6, 8], 1.0).unwrap();
        let v = Volume::from_fn(spec, |i, j, k| (i + j + k) as f64);
        assert!(c.localize(&v).unwrap().data().iter().all(|p| *p == 0.5));
    }
}
