//! Topology-preserving thinning of binary volumes to curve skeletons.

use super::components::neighbours26;
use crate::volume::Volume;

/// 3x3x3 neighbourhood, index `(dx+1) + 3(dy+1) + 9(dz+1)`.
type Cube = [bool; 27];

fn cube(vol: &Volume, i: usize, j: usize, k: usize) -> Cube {
    let mut c = [false; 27];
    for dz in -1..=1i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let v = vol.get_or_zero(i as i64 + dx, j as i64 + dy, k as i64 + dz);
                c[((dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)) as usize] = v > 0.0;
            }
        }
    }
    c
}

fn coords(n: usize) -> (i64, i64, i64) {
    (n as i64 % 3 - 1, (n as i64 / 3) % 3 - 1, n as i64 / 9 - 1)
}

fn count_components(members: &[usize], adjacent: impl Fn(usize, usize) -> bool) -> usize {
    let mut label = vec![usize::MAX; members.len()];
    let mut count = 0;
    for s in 0..members.len() {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = count;
        let mut stack = vec![s];
        while let Some(a) = stack.pop() {
            for b in 0..members.len() {
                if label[b] == usize::MAX && adjacent(members[a], members[b]) {
                    label[b] = count;
                    stack.push(b);
                }
            }
        }
        count += 1;
    }
    count
}

/// Whether deleting the center changes neither the number of 26-connected
/// foreground components nor of 6-connected background components locally.
fn is_simple(c: &Cube) -> bool {
    let fg: Vec<usize> = (0..27).filter(|&n| n != 13 && c[n]).collect();
    if fg.is_empty() {
        return false;
    }
    let adj26 = |a: usize, b: usize| {
        let (p, q) = (coords(a), coords(b));
        a != b && (p.0 - q.0).abs() <= 1 && (p.1 - q.1).abs() <= 1 && (p.2 - q.2).abs() <= 1
    };
    if count_components(&fg, adj26) != 1 {
        return false;
    }
    // Background in the 18-neighbourhood, counting only components that
    // touch a face neighbour of the center.
    let is18 = |n: usize| {
        let p = coords(n);
        n != 13 && p.0.abs() + p.1.abs() + p.2.abs() <= 2
    };
    let is6 = |n: usize| {
        let p = coords(n);
        p.0.abs() + p.1.abs() + p.2.abs() == 1
    };
    let bg: Vec<usize> = (0..27).filter(|&n| is18(n) && !c[n]).collect();
    if !bg.iter().any(|&n| is6(n)) {
        return false;
    }
    let adj6 = |a: usize, b: usize| {
        let (p, q) = (coords(a), coords(b));
        (p.0 - q.0).abs() + (p.1 - q.1).abs() + (p.2 - q.2).abs() == 1
    };
    let mut label = vec![usize::MAX; bg.len()];
    let mut touching = 0;
    for s in 0..bg.len() {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = s;
        let mut stack = vec![s];
        let mut touches = false;
        while let Some(a) = stack.pop() {
            touches |= is6(bg[a]);
            for b in 0..bg.len() {
                if label[b] == usize::MAX && adj6(bg[a], bg[b]) {
                    label[b] = s;
                    stack.push(b);
                }
            }
        }
        if touches {
            touching += 1;
        }
    }
    touching == 1
}

fn neighbour_count(c: &Cube) -> usize {
    (0..27).filter(|&n| n != 13 && c[n]).count()
}

/// Directional sequential thinning. Curve endpoints (one neighbour) are
/// kept, so the result is a one-voxel-wide curve skeleton with the same
/// topology as the input.
pub fn skeletonize(vol: &Volume) -> Volume {
    let spec = *vol.spec();
    let mut out = vol.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let dirs: [(i64, i64, i64); 6] = [(0, -1, 0), (0, 1, 0), (1, 0, 0), (-1, 0, 0), (0, 0, 1), (0, 0, -1)];
    loop {
        let mut changed = false;
        for &(dx, dy, dz) in &dirs {
            let candidates: Vec<usize> = (0..spec.len())
                .filter(|&idx| {
                    if out.data()[idx] <= 0.0 {
                        return false;
                    }
                    let (i, j, k) = spec.unindex(idx);
                    out.get_or_zero(i as i64 + dx, j as i64 + dy, k as i64 + dz) <= 0.0
                })
                .collect();
            for idx in candidates {
                let (i, j, k) = spec.unindex(idx);
                let c = cube(&out, i, j, k);
                if neighbour_count(&c) > 1 && is_simple(&c) {
                    out.data_mut()[idx] = 0.0;
                    changed = true;
                }
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Number of 26-neighbours that are set, for every set voxel (0 elsewhere).
pub fn neighbour_counts(vol: &Volume) -> Vec<usize> {
    let spec = *vol.spec();
    let nb = neighbours26();
    (0..spec.len())
        .map(|idx| {
            if vol.data()[idx] <= 0.0 {
                return 0;
            }
            let (i, j, k) = spec.unindex(idx);
            nb.iter()
                .filter(|(dx, dy, dz)| vol.get_or_zero(i as i64 + dx, j as i64 + dy, k as i64 + dz) > 0.0)
                .count()
        })
        .collect()
}

/// Removes branches shorter than `min_len` voxels that run from an endpoint
/// to a junction, and isolated curves shorter than `min_len`. Repeats until
/// stable, since pruning can turn junctions into plain curve voxels.
pub fn prune_spurs(skeleton: &Volume, min_len: usize) -> Volume {
    let spec = *skeleton.spec();
    let nb = neighbours26();
    let mut out = skeleton.clone();
    let neighbours_of = |v: &Volume, idx: usize| -> Vec<usize> {
        let (i, j, k) = spec.unindex(idx);
        nb.iter()
            .filter_map(|(dx, dy, dz)| {
                let (x, y, z) = (i as i64 + dx, j as i64 + dy, k as i64 + dz);
                (v.get_or_zero(x, y, z) > 0.0).then(|| spec.index(x as usize, y as usize, z as usize))
            })
            .collect()
    };
    loop {
        let counts = neighbour_counts(&out);
        let mut remove = Vec::new();
        for start in (0..spec.len()).filter(|&i| counts[i] == 1) {
            let mut path = vec![start];
            let mut prev = usize::MAX;
            let mut cur = start;
            let reached_junction = loop {
                let next: Vec<usize> = neighbours_of(&out, cur).into_iter().filter(|&n| n != prev && !path.contains(&n)).collect();
                if next.is_empty() {
                    break false;
                }
                if next.iter().any(|&n| counts[n] >= 3) || next.len() > 1 {
                    break true;
                }
                prev = cur;
                cur = next[0];
                path.push(cur);
                if path.len() >= min_len {
                    break false;
                }
            };
            if path.len() < min_len && (reached_junction || counts[cur] <= 1) {
                remove.extend(path);
            }
        }
        if remove.is_empty() {
            return out;
        }
        for i in remove {
            out.data_mut()[i] = 0.0;
        }
        out = skeletonize(&out);
    }
}

/// Skeleton endpoints (one neighbour) and junctions (three or more).
pub fn corner_candidates(skeleton: &Volume) -> Volume {
    let counts = neighbour_counts(skeleton);
    let data = counts.iter().map(|&n| if n == 1 || n >= 3 { 1.0 } else { 0.0 }).collect();
    Volume::from_data(*skeleton.spec(), data).expect("same grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeSpec;

    #[test]
    fn bar_thins_to_line() {
        let spec = VolumeSpec::centered([20, 9, 9], 1.0).unwrap();
        let v = Volume::from_fn(spec, |i, j, k| if (3..17).contains(&i) && (3..6).contains(&j) && (3..6).contains(&k) { 1.0 } else { 0.0 });
        let s = skeletonize(&v);
        let n = s.count_nonzero();
        assert!((10..=16).contains(&n), "{n}");
        let counts = neighbour_counts(&s);
        assert_eq!(counts.iter().filter(|&&c| c == 1).count(), 2);
        assert_eq!(super::super::components::connected_components(&s).len(), 1);
    }

    #[test]
    fn ring_keeps_its_hole() {
        let spec = VolumeSpec::centered([16, 16, 5], 1.0).unwrap();
        let v = Volume::from_fn(spec, |i, j, k| {
            let r = ((i as f64 - 7.5).powi(2) + (j as f64 - 7.5).powi(2)).sqrt();
            if (4.0..7.0).contains(&r) && (1..4).contains(&k) { 1.0 } else { 0.0 }
        });
        let s = skeletonize(&v);
        assert!(s.count_nonzero() > 12);
        // No endpoints on a closed curve.
        assert_eq!(neighbour_counts(&s).iter().filter(|&&c| c == 1).count(), 0);
    }

    #[test]
    fn l_path_has_only_endpoints() {
        let spec = VolumeSpec::centered([12, 12, 3], 1.0).unwrap();
        let mut v = Volume::zeros(spec);
        for i in 2..10 {
            v.set(i, 2, 1, 1.0);
            v.set(2, i, 1, 1.0);
        }
        let c = corner_candidates(&skeletonize(&v));
        assert_eq!(c.count_nonzero(), 2);
    }
}
