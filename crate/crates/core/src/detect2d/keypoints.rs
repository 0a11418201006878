use serde::{Deserialize, Serialize};

use super::morph::thin_binary;
use crate::projection::{Projection, ProjectionKind};

/// Settings for [`keypoints_2d`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointConfig {
    /// Skeleton spurs shorter than this many pixels are ignored.
    pub prune_len: usize,
    /// Keypoints closer than this are merged into their centroid.
    pub merge_radius_px: f64,
    /// Enclosed background regions up to this area (pixels) count as loops
    /// and contribute their centroid; 0 disables loop centers.
    pub max_loop_area_px: usize,
    pub min_loop_area_px: usize,
}

impl Default for KeypointConfig {
    fn default() -> Self {
        Self { prune_len: 5, merge_radius_px: 4.0, max_loop_area_px: 600, min_loop_area_px: 3 }
    }
}

const N8: [(isize, isize); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

struct Grid {
    rows: usize,
    cols: usize,
    on: Vec<bool>,
}

impl Grid {
    fn get(&self, y: isize, x: isize) -> bool {
        y >= 0 && x >= 0 && (y as usize) < self.rows && (x as usize) < self.cols && self.on[y as usize * self.cols + x as usize]
    }

    fn neighbours(&self, i: usize) -> Vec<usize> {
        let (y, x) = ((i / self.cols) as isize, (i % self.cols) as isize);
        N8.iter()
            .filter(|(dy, dx)| self.get(y + dy, x + dx))
            .map(|(dy, dx)| (y + dy) as usize * self.cols + (x + dx) as usize)
            .collect()
    }

    /// Number of separate 8-connected foreground runs around the pixel
    /// (crossing number); 1 = endpoint or curve, >= 3 = branch point.
    fn branches(&self, i: usize) -> usize {
        let (y, x) = ((i / self.cols) as isize, (i % self.cols) as isize);
        let ring: Vec<bool> = N8.iter().map(|(dy, dx)| self.get(y + dy, x + dx)).collect();
        let n = ring.iter().filter(|v| **v).count();
        if n == 0 {
            return 0;
        }
        let runs = (0..8).filter(|&k| ring[k] && !ring[(k + 1) % 8]).count();
        // Diagonal neighbours adjacent to an on edge neighbour belong to the
        // same branch.
        runs.max(1).min(n)
    }
}

fn prune(g: &mut Grid, min_len: usize) {
    for _ in 0..3 {
        let ends: Vec<usize> = (0..g.on.len()).filter(|&i| g.on[i] && g.neighbours(i).len() == 1).collect();
        let mut removed = false;
        for start in ends {
            if !g.on[start] {
                continue;
            }
            let mut path = vec![start];
            let mut cur = start;
            let hit_branch = loop {
                let next: Vec<usize> = g.neighbours(cur).into_iter().filter(|n| !path.contains(n)).collect();
                if next.is_empty() {
                    break false;
                }
                if next.len() > 1 || g.branches(next[0]) >= 3 {
                    break true;
                }
                cur = next[0];
                path.push(cur);
                if path.len() >= min_len {
                    break false;
                }
            };
            if path.len() < min_len && hit_branch {
                for i in path {
                    g.on[i] = false;
                }
                removed = true;
            }
        }
        if !removed {
            break;
        }
    }
}

fn merge(points: Vec<[f64; 2]>, radius: f64) -> Vec<[f64; 2]> {
    let mut parent: Vec<usize> = (0..points.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            let d = ((points[a][0] - points[b][0]).powi(2) + (points[a][1] - points[b][1]).powi(2)).sqrt();
            if d < radius {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: Vec<(usize, [f64; 2], f64)> = Vec::new();
    for i in 0..points.len() {
        let r = find(&mut parent, i);
        match groups.iter_mut().find(|g| g.0 == r) {
            Some(g) => {
                g.1[0] += points[i][0];
                g.1[1] += points[i][1];
                g.2 += 1.0;
            }
            None => groups.push((r, points[i], 1.0)),
        }
    }
    groups.into_iter().map(|(_, s, n)| [s[0] / n, s[1] / n]).collect()
}

/// Keypoints `(u, v)` of a binary feature map: endpoints and branch points
/// of its skeleton, and centroids of small enclosed loops.
pub fn keypoints_2d(binary: &Projection, cfg: &KeypointConfig) -> Vec<[f64; 2]> {
    let thin = thin_binary(binary);
    let (rows, cols) = (thin.rows(), thin.cols());
    let mut g = Grid { rows, cols, on: thin.data().iter().map(|v| *v > 0.5).collect() };
    if cfg.prune_len > 0 {
        prune(&mut g, cfg.prune_len);
    }
    let mut pts = Vec::new();
    for i in 0..g.on.len() {
        if !g.on[i] {
            continue;
        }
        let n = g.neighbours(i).len();
        if n == 1 || (n >= 3 && g.branches(i) >= 3) {
            pts.push([(i % cols) as f64, (i / cols) as f64]);
        }
    }
    if cfg.max_loop_area_px > 0 {
        // 4-connected background regions of the skeleton that do not touch
        // the border.
        let mut seen = vec![false; g.on.len()];
        for s in 0..g.on.len() {
            if g.on[s] || seen[s] {
                continue;
            }
            seen[s] = true;
            let mut stack = vec![s];
            let (mut area, mut sx, mut sy, mut border) = (0usize, 0.0, 0.0, false);
            while let Some(i) = stack.pop() {
                let (y, x) = (i / cols, i % cols);
                area += 1;
                sx += x as f64;
                sy += y as f64;
                border |= y == 0 || x == 0 || y == rows - 1 || x == cols - 1;
                for (dy, dx) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                    let (yy, xx) = (y as isize + dy, x as isize + dx);
                    if yy < 0 || xx < 0 || yy >= rows as isize || xx >= cols as isize {
                        continue;
                    }
                    let j = yy as usize * cols + xx as usize;
                    if !g.on[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            if !border && (cfg.min_loop_area_px..=cfg.max_loop_area_px).contains(&area) {
                pts.push([sx / area as f64, sy / area as f64]);
            }
        }
    }
    if cfg.merge_radius_px > 0.0 {
        pts = merge(pts, cfg.merge_radius_px);
    }
    pts
}

/// Binary map with a disk of `radius` pixels around each keypoint.
pub fn render_keypoints(points: &[[f64; 2]], like: &Projection, radius: f64) -> Projection {
    let mut out = Projection::zeros(like.rows(), like.cols(), like.pixel_pitch(), ProjectionKind::Probability);
    let r = radius.ceil() as isize;
    for p in points {
        let (cu, cv) = (p[0].round() as isize, p[1].round() as isize);
        for dv in -r..=r {
            for du in -r..=r {
                let (u, v) = (cu + du, cv + dv);
                if u < 0 || v < 0 || u >= like.cols() as isize || v >= like.rows() as isize {
                    continue;
                }
                if (u as f64 - p[0]).powi(2) + (v as f64 - p[1]).powi(2) <= radius * radius {
                    out.set(v as usize, u as usize, 1.0);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draw(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Projection {
        let mut p = Projection::zeros(rows, cols, 1.0, ProjectionKind::Probability);
        for y in 0..rows {
            for x in 0..cols {
                if f(y, x) {
                    p.set(y, x, 1.0);
                }
            }
        }
        p
    }

    #[test]
    fn t_junction_and_ends() {
        // Horizontal bar with a vertical stem: 3 ends + 1 junction.
        let p = draw(40, 40, |y, x| (y == 10 && (5..35).contains(&x)) || (x == 20 && (10..30).contains(&y)));
        let cfg = KeypointConfig { max_loop_area_px: 0, ..Default::default() };
        let k = keypoints_2d(&p, &cfg);
        assert_eq!(k.len(), 4, "{k:?}");
        assert!(k.iter().any(|q| (q[0] - 20.0).abs() <= 1.5 && (q[1] - 10.0).abs() <= 1.5));
    }

    #[test]
    fn ring_center() {
        let p = draw(40, 40, |y, x| {
            let r = ((y as f64 - 20.0).powi(2) + (x as f64 - 15.0).powi(2)).sqrt();
            (5.5..7.0).contains(&r)
        });
        let k = keypoints_2d(&p, &KeypointConfig::default());
        assert_eq!(k.len(), 1, "{k:?}");
        assert!((k[0][0] - 15.0).abs() < 0.5 && (k[0][1] - 20.0).abs() < 0.5);
    }
}
