use nalgebra::Vector3;

use super::{Projection, ProjectionError, ProjectionKind};
use crate::geometry::{ConeBeamGeometry, GeometryError};
use crate::points::PointSet3D;
use crate::volume::Volume;

fn splat(acc: &mut Projection, u: f64, v: f64) {
    let (c0, r0) = (u.floor(), v.floor());
    let (wu, wv) = (u - c0, v - r0);
    let (c0, r0) = (c0 as i64, r0 as i64);
    for (dr, dc, w) in [
        (0, 0, (1.0 - wu) * (1.0 - wv)),
        (0, 1, wu * (1.0 - wv)),
        (1, 0, (1.0 - wu) * wv),
        (1, 1, wu * wv),
    ] {
        let (r, c) = (r0 + dr, c0 + dc);
        if w > 0.0 && r >= 0 && c >= 0 && (r as usize) < acc.rows() && (c as usize) < acc.cols() {
            let cur = acc.get(r as usize, c as usize);
            acc.set(r as usize, c as usize, cur + w);
        }
    }
}

fn render(points: impl Iterator<Item = Vector3<f64>>, geom: &ConeBeamGeometry) -> Result<Projection, ProjectionError> {
    let p = geom.projection_matrix()?;
    let mut acc = Projection::zeros(geom.detector_rows, geom.detector_cols, geom.pixel_pitch, ProjectionKind::Probability);
    for x in points {
        if p.depth(&x) <= 0.0 {
            return Err(GeometryError::PointAtInfinity(p.depth(&x)).into());
        }
        let (u, v) = p.project(&x)?;
        splat(&mut acc, u, v);
    }
    Ok(acc.map(|w| if w > 0.0 { 1.0 } else { 0.0 }))
}

/// Binary projection of feature points: each point is splatted with its
/// bilinear footprint and every pixel with positive weight is lit.
pub fn render_points_projection(points: &PointSet3D, geom: &ConeBeamGeometry) -> Result<Projection, ProjectionError> {
    render(points.iter().map(|p| p.mm), geom)
}

/// Binary projection of a feature volume (voxels > 0.5).
///
/// Each lit voxel is split into `k³` sub-points, with `k` chosen so that the
/// sub-point spacing is at most one detector pixel after magnification; this
/// keeps the projected image of a voxel line connected.
pub fn render_edge_projection(edges: &Volume, geom: &ConeBeamGeometry) -> Result<Projection, ProjectionError> {
    geom.validate()?;
    let spec = *edges.spec();
    let mut min_depth = f64::INFINITY;
    let (lo, hi) = spec.bounds();
    for corner in 0..8 {
        let x = Vector3::new(
            if corner & 1 == 0 { lo.x } else { hi.x },
            if corner & 2 == 0 { lo.y } else { hi.y },
            if corner & 4 == 0 { lo.z } else { hi.z },
        );
        min_depth = min_depth.min(geom.depth(&x));
    }
    if min_depth <= 0.0 {
        return Err(ProjectionError::SourceInsideVolume { source_mm: geom.source().into() });
    }
    let footprint = spec.voxel_pitch * geom.sdd / min_depth / geom.pixel_pitch;
    let k = footprint.ceil().max(1.0) as usize;
    let offsets: Vec<f64> = (0..k).map(|a| ((a as f64 + 0.5) / k as f64 - 0.5) * spec.voxel_pitch).collect();
    let mut pts = Vec::new();
    for (idx, _) in edges.data().iter().enumerate().filter(|(_, v)| **v > 0.5) {
        let (i, j, kk) = spec.unindex(idx);
        let c = spec.voxel_center(i, j, kk);
        for &a in &offsets {
            for &b in &offsets {
                for &d in &offsets {
                    pts.push(c + Vector3::new(a, b, d));
                }
            }
        }
    }
    render(pts.into_iter(), geom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeSpec;

    fn geom() -> ConeBeamGeometry {
        ConeBeamGeometry::new(290.0, 923.0, 128, 128, 0.8, 17.0).unwrap()
    }

    #[test]
    fn single_point_footprint() {
        let g = geom();
        let spec = VolumeSpec::centered([8, 8, 8], 1.0).unwrap();
        let x = Vector3::new(1.3, -2.1, 0.7);
        let pts = PointSet3D::from_mm(&spec, [("p".to_string(), x)]);
        let img = render_points_projection(&pts, &g).unwrap();
        let (u, v) = g.projection_matrix().unwrap().project(&x).unwrap();
        let mut expected = vec![];
        for (r, c) in [(v.floor(), u.floor()), (v.floor(), u.ceil()), (v.ceil(), u.floor()), (v.ceil(), u.ceil())] {
            expected.push((r as usize, c as usize));
        }
        expected.sort();
        expected.dedup();
        let mut lit: Vec<(usize, usize)> = (0..img.rows())
            .flat_map(|r| (0..img.cols()).map(move |c| (r, c)))
            .filter(|&(r, c)| img.get(r, c) > 0.0)
            .collect();
        lit.sort();
        assert_eq!(lit, expected);
    }

    #[test]
    fn empty_volume_renders_blank() {
        let spec = VolumeSpec::centered([8, 8, 8], 1.0).unwrap();
        let img = render_edge_projection(&Volume::zeros(spec), &geom()).unwrap();
        assert_eq!(img.count_lit(), 0);
    }
}
