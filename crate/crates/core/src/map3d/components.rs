use nalgebra::Vector3;

use crate::points::PointSet3D;
use crate::volume::Volume;

/// Offsets of the 26-neighbourhood.
pub(crate) fn neighbours26() -> Vec<(i64, i64, i64)> {
    let mut v = Vec::with_capacity(26);
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                if (dx, dy, dz) != (0, 0, 0) {
                    v.push((dx, dy, dz));
                }
            }
        }
    }
    v
}

/// 26-connected components of voxels with value > 0, each as a list of
/// flat indices. Components are ordered by their lowest index.
pub fn connected_components(vol: &Volume) -> Vec<Vec<usize>> {
    let spec = *vol.spec();
    let nb = neighbours26();
    let mut seen = vec![false; spec.len()];
    let mut comps = Vec::new();
    for start in 0..spec.len() {
        if seen[start] || vol.data()[start] <= 0.0 {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut members = Vec::new();
        while let Some(idx) = stack.pop() {
            members.push(idx);
            let (i, j, k) = spec.unindex(idx);
            for &(dx, dy, dz) in &nb {
                let (x, y, z) = (i as i64 + dx, j as i64 + dy, k as i64 + dz);
                if x < 0 || y < 0 || z < 0 || x >= spec.nx as i64 || y >= spec.ny as i64 || z >= spec.nz as i64 {
                    continue;
                }
                let n = spec.index(x as usize, y as usize, z as usize);
                if !seen[n] && vol.data()[n] > 0.0 {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps
}

/// Intensity-weighted centroids (in voxel units) of 26-connected components
/// with at least `min_cluster` voxels, labelled `p0, p1, ...` in scan order.
pub fn extract_points(vol: &Volume, min_cluster: usize) -> PointSet3D {
    let spec = *vol.spec();
    let centroids = connected_components(vol).into_iter().filter(|c| c.len() >= min_cluster.max(1)).map(|c| {
        let mut acc = Vector3::zeros();
        let mut w = 0.0;
        for idx in c {
            let (i, j, k) = spec.unindex(idx);
            let v = vol.data()[idx];
            acc += Vector3::new(i as f64, j as f64, k as f64) * v;
            w += v;
        }
        acc / w
    });
    PointSet3D::from_voxels(&spec, centroids.enumerate().map(|(n, c)| (format!("p{n}"), c)))
}
