//! Position and reprojection error measures.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, ProjectionMatrix};
use crate::points::PointSet3D;
use crate::projection::Projection;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("reference set is empty")]
    EmptyReference,
    #[error("prediction and target shapes differ")]
    ShapeMismatch,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One reference point and its assigned estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMatchResult {
    pub label: String,
    /// Index into the estimated set; `None` when unmatched.
    pub estimate: Option<usize>,
    /// Estimate minus reference, voxels.
    pub offset_voxels: [f64; 3],
    /// Distance in voxels; infinite when unmatched.
    pub distance_voxels: f64,
}

/// Greedy unique nearest-neighbour assignment: all (reference, estimate)
/// pairs within `max_dist` voxels are taken in order of distance, each point
/// used at most once. Ties break by label, then by estimate position.
pub fn match_points(estimated: &PointSet3D, reference: &PointSet3D, max_dist: f64) -> Result<Vec<PointMatchResult>, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let key = |v: &nalgebra::Vector3<f64>| (v.x.to_bits(), v.y.to_bits(), v.z.to_bits());
    let mut pairs = Vec::new();
    for (r, rp) in reference.iter().enumerate() {
        for (e, ep) in estimated.iter().enumerate() {
            let d = (ep.voxels - rp.voxels).norm();
            if d <= max_dist {
                pairs.push((d, r, e));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| reference.as_slice()[a.1].label.cmp(&reference.as_slice()[b.1].label))
            .then_with(|| {
                let (ka, kb) = (key(&estimated.as_slice()[a.2].voxels), key(&estimated.as_slice()[b.2].voxels));
                ka.cmp(&kb)
            })
    });
    let mut ref_used = vec![None; reference.len()];
    let mut est_used = vec![false; estimated.len()];
    for (_, r, e) in pairs {
        if ref_used[r].is_none() && !est_used[e] {
            ref_used[r] = Some(e);
            est_used[e] = true;
        }
    }
    Ok(reference
        .iter()
        .zip(ref_used)
        .map(|(rp, e)| match e {
            Some(e) => {
                let d = estimated.as_slice()[e].voxels - rp.voxels;
                PointMatchResult { label: rp.label.clone(), estimate: Some(e), offset_voxels: d.into(), distance_voxels: d.norm() }
            }
            None => PointMatchResult {
                label: rp.label.clone(),
                estimate: None,
                offset_voxels: [f64::NAN; 3],
                distance_voxels: f64::INFINITY,
            },
        })
        .collect())
}

/// Summary statistics over matched points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub n_unmatched: usize,
}

/// Per-point errors in voxels and mm plus summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionReport {
    pub voxel_pitch_mm: f64,
    pub rows: Vec<PointMatchResult>,
    /// Statistics in voxels.
    pub voxels: ErrorSummary,
    /// Statistics in mm.
    pub mm: ErrorSummary,
}

fn summarize(d: &[f64], n_unmatched: usize) -> ErrorSummary {
    if d.is_empty() {
        return ErrorSummary { min: f64::NAN, max: f64::NAN, mean: f64::NAN, median: f64::NAN, n_unmatched };
    }
    let mut s = d.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
    ErrorSummary { min: s[0], max: s[n - 1], mean: s.iter().sum::<f64>() / n as f64, median, n_unmatched }
}

pub fn position_error_report(matches: &[PointMatchResult], voxel_pitch: f64) -> PositionReport {
    let d: Vec<f64> = matches.iter().filter(|m| m.estimate.is_some()).map(|m| m.distance_voxels).collect();
    let unmatched = matches.len() - d.len();
    let voxels = summarize(&d, unmatched);
    // Scaled, not re-summarized, so mm = voxels x pitch holds exactly.
    let mm = ErrorSummary {
        min: voxels.min * voxel_pitch,
        max: voxels.max * voxel_pitch,
        mean: voxels.mean * voxel_pitch,
        median: voxels.median * voxel_pitch,
        n_unmatched: unmatched,
    };
    PositionReport { voxel_pitch_mm: voxel_pitch, rows: matches.to_vec(), voxels, mm }
}

impl PositionReport {
    /// CSV with columns `label,dx,dy,dz,dist_voxels,dist_mm`; unmatched rows
    /// carry empty offsets and `inf` distances.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("label,dx,dy,dz,dist_voxels,dist_mm\n");
        for r in &self.rows {
            if r.estimate.is_some() {
                let [dx, dy, dz] = r.offset_voxels;
                s.push_str(&format!(
                    "{},{dx},{dy},{dz},{},{}\n",
                    r.label,
                    r.distance_voxels,
                    r.distance_voxels * self.voxel_pitch_mm
                ));
            } else {
                s.push_str(&format!("{},,,,inf,inf\n", r.label));
            }
        }
        s
    }

    /// JSON summary `{min, max, mean, median, n_unmatched}` in voxels and mm.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({ "voxels": self.voxels, "mm": self.mm, "voxel_pitch_mm": self.voxel_pitch_mm })
    }
}

/// Pixel distances between projected points and observed positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionReport {
    pub per_label: Vec<(String, f64)>,
    pub mean: f64,
}

pub fn reprojection_error(
    points: &PointSet3D,
    p: &ProjectionMatrix,
    observed: &[(String, f64, f64)],
) -> Result<ReprojectionReport, EvalError> {
    let by_label: HashMap<&str, _> = points.iter().map(|l| (l.label.as_str(), l)).collect();
    let mut per_label = Vec::with_capacity(observed.len());
    for (label, u, v) in observed {
        let pt = by_label.get(label.as_str()).ok_or_else(|| EvalError::UnknownLabel(label.clone()))?;
        let (pu, pv) = p.project(&pt.mm)?;
        per_label.push((label.clone(), ((pu - u).powi(2) + (pv - v).powi(2)).sqrt()));
    }
    let mean = if per_label.is_empty() { 0.0 } else { per_label.iter().map(|x| x.1).sum::<f64>() / per_label.len() as f64 };
    Ok(ReprojectionReport { per_label, mean })
}

/// Fraction of pixels where a binary prediction equals the binary target.
pub fn pixel_accuracy(pred: &Projection, target: &Projection) -> Result<f64, EvalError> {
    if (pred.rows(), pred.cols()) != (target.rows(), target.cols()) {
        return Err(EvalError::ShapeMismatch);
    }
    let hits = pred.data().iter().zip(target.data()).filter(|(p, t)| (**p > 0.5) == (**t > 0.5)).count();
    Ok(hits as f64 / pred.data().len().max(1) as f64)
}

/// `(hits, positives)`: target pixels with a predicted pixel within
/// `radius` (Chebyshev), and the number of target pixels.
pub fn dilated_recall_counts(pred: &Projection, target: &Projection, radius: usize) -> Result<(usize, usize), EvalError> {
    if (pred.rows(), pred.cols()) != (target.rows(), target.cols()) {
        return Err(EvalError::ShapeMismatch);
    }
    let (rows, cols) = (pred.rows(), pred.cols());
    let r = radius as isize;
    let (mut hits, mut total) = (0, 0);
    for y in 0..rows {
        for x in 0..cols {
            if target.get(y, x) <= 0.5 {
                continue;
            }
            total += 1;
            let found = (-r..=r).any(|dy| {
                (-r..=r).any(|dx| {
                    let (yy, xx) = (y as isize + dy, x as isize + dx);
                    yy >= 0 && xx >= 0 && (yy as usize) < rows && (xx as usize) < cols && pred.get(yy as usize, xx as usize) > 0.5
                })
            });
            if found {
                hits += 1;
            }
        }
    }
    Ok((hits, total))
}
