use crate::projection::Projection;

/// Exact Euclidean feature transform of a binary image: for every pixel, the
/// nearest lit pixel (value > 0.5).
#[derive(Debug, Clone)]
pub struct DistanceField {
    rows: usize,
    cols: usize,
    nearest: Vec<u32>,
    lit: Vec<(f64, f64)>,
}

const NONE: u32 = u32::MAX;

impl DistanceField {
    /// `None` when the image has no lit pixel.
    pub fn new(mask: &Projection) -> Option<Self> {
        let (rows, cols) = (mask.rows(), mask.cols());
        let on = |r: usize, c: usize| mask.get(r, c) > 0.5;

        // Per column: nearest lit row.
        let mut col_near = vec![NONE; rows * cols];
        for c in 0..cols {
            let mut last = NONE;
            for r in 0..rows {
                if on(r, c) {
                    last = r as u32;
                }
                col_near[r * cols + c] = last;
            }
            let mut next = NONE;
            for r in (0..rows).rev() {
                if on(r, c) {
                    next = r as u32;
                }
                let cur = col_near[r * cols + c];
                let d = |x: u32| if x == NONE { u64::MAX } else { (x as i64 - r as i64).unsigned_abs() };
                if d(next) < d(cur) {
                    col_near[r * cols + c] = next;
                }
            }
        }

        // Per row: lower envelope of parabolas over columns.
        let mut nearest = vec![NONE; rows * cols];
        let mut v = vec![0usize; cols];
        let mut z = vec![0f64; cols + 1];
        let mut any = false;
        for r in 0..rows {
            let f = |c: usize| -> f64 {
                let nr = col_near[r * cols + c];
                if nr == NONE { f64::INFINITY } else { (nr as f64 - r as f64).powi(2) }
            };
            let finite: Vec<usize> = (0..cols).filter(|&c| f(c).is_finite()).collect();
            if finite.is_empty() {
                continue;
            }
            any = true;
            let mut k = 0usize;
            v[0] = finite[0];
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            for &q in &finite[1..] {
                let meet = |p: usize| {
                    ((f(q) + (q * q) as f64) - (f(p) + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
                };
                // z[0] is -inf, so k never underflows.
                let mut s = meet(v[k]);
                while s <= z[k] {
                    k -= 1;
                    s = meet(v[k]);
                }
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
            }
            let mut k = 0usize;
            for c in 0..cols {
                while z[k + 1] < c as f64 {
                    k += 1;
                }
                let src = v[k];
                let nr = col_near[r * cols + src];
                nearest[r * cols + c] = nr * cols as u32 + src as u32;
            }
        }
        if !any {
            return None;
        }
        let lit = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .filter(|&(r, c)| on(r, c))
            .map(|(r, c)| (c as f64, r as f64))
            .collect();
        Some(Self { rows, cols, nearest, lit })
    }

    /// Lit pixel centers as `(u, v)`.
    pub fn lit_pixels(&self) -> &[(f64, f64)] {
        &self.lit
    }

    fn nearest_of(&self, r: usize, c: usize) -> (f64, f64) {
        let idx = self.nearest[r * self.cols + c] as usize;
        ((idx % self.cols) as f64, (idx / self.cols) as f64)
    }

    /// Squared distance from pixel `(r, c)` to its nearest lit pixel.
    pub fn squared_distance_at(&self, r: usize, c: usize) -> f64 {
        let (u, v) = self.nearest_of(r, c);
        (u - c as f64).powi(2) + (v - r as f64).powi(2)
    }

    /// Distance from a continuous detector position `(u, v)` to the nearest
    /// lit pixel center, searched among the nearest lit pixels of the four
    /// surrounding pixels.
    pub fn distance(&self, u: f64, v: f64) -> f64 {
        let cu = u.clamp(0.0, (self.cols - 1) as f64);
        let cv = v.clamp(0.0, (self.rows - 1) as f64);
        let (c0, r0) = (cu.floor() as usize, cv.floor() as usize);
        let c1 = (c0 + 1).min(self.cols - 1);
        let r1 = (r0 + 1).min(self.rows - 1);
        let mut best = f64::INFINITY;
        for (r, c) in [(r0, c0), (r0, c1), (r1, c0), (r1, c1)] {
            let (lu, lv) = self.nearest_of(r, c);
            best = best.min((lu - u).powi(2) + (lv - v).powi(2));
        }
        best.sqrt()
    }
}
