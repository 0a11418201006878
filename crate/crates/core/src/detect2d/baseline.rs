use serde::{Deserialize, Serialize};

use super::DetectError;
use crate::projection::{Projection, ProjectionKind};

fn default_sigma() -> f64 {
    2.0
}
fn default_percentile() -> f64 {
    99.5
}

/// Settings of the Hessian ridge detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Gaussian smoothing scale in pixels.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Response percentile mapped to 1.
    #[serde(default = "default_percentile")]
    pub percentile: f64,
    /// Fixed response scale; overrides the percentile when set, so blocks of
    /// one image can share the whole-image normalization.
    #[serde(default)]
    pub scale: Option<f64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { sigma: default_sigma(), percentile: default_percentile(), scale: None }
    }
}

impl BaselineConfig {
    /// Pixels within this distance of a border see the border.
    pub fn support(&self) -> usize {
        self.radius() + 1
    }

    fn radius(&self) -> usize {
        ((2.0 * self.sigma).floor() as usize).saturating_sub(1)
    }
}

fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable smoothing with clamped (edge-replicating) borders.
fn smooth(data: &[f64], rows: usize, cols: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..rows {
        for x in 0..cols {
            let mut s = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                let xx = (x as isize + t as isize - r).clamp(0, cols as isize - 1) as usize;
                s += w * data[y * cols + xx];
            }
            tmp[y * cols + x] = s;
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..rows {
        for x in 0..cols {
            let mut s = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                let yy = (y as isize + t as isize - r).clamp(0, rows as isize - 1) as usize;
                s += w * tmp[yy * cols + x];
            }
            out[y * cols + x] = s;
        }
    }
    out
}

/// Magnitude of the largest-magnitude eigenvalue of the smoothed Hessian.
pub fn hessian_response(proj: &Projection, sigma: f64) -> Vec<f64> {
    let (rows, cols) = (proj.rows(), proj.cols());
    let cfg = BaselineConfig { sigma, ..Default::default() };
    let s = smooth(proj.data(), rows, cols, &gaussian_kernel(sigma, cfg.radius()));
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, rows as isize - 1) as usize;
        let x = x.clamp(0, cols as isize - 1) as usize;
        s[y * cols + x]
    };
    let mut out = vec![0.0; rows * cols];
    for y in 0..rows as isize {
        for x in 0..cols as isize {
            let c = at(y, x);
            let dxx = at(y, x + 1) - 2.0 * c + at(y, x - 1);
            let dyy = at(y + 1, x) - 2.0 * c + at(y - 1, x);
            let dxy = (at(y + 1, x + 1) - at(y + 1, x - 1) - at(y - 1, x + 1) + at(y - 1, x - 1)) / 4.0;
            let mean = (dxx + dyy) / 2.0;
            let disc = (((dxx - dyy) / 2.0).powi(2) + dxy * dxy).sqrt();
            out[y as usize * cols + x as usize] = mean.abs() + disc;
        }
    }
    out
}

/// Value at percentile `p` (0..=100) by nearest rank.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    let rank = ((p / 100.0) * (v.len() - 1) as f64).round() as usize;
    let rank = rank.min(v.len() - 1);
    let (_, x, _) = v.select_nth_unstable_by(rank, |a, b| a.total_cmp(b));
    *x
}

/// Ridge/crease detector on a line-integral image: Hessian response scaled
/// to `[0, 1]` by a robust percentile (or a fixed scale).
pub fn baseline_detect(proj: &Projection, cfg: &BaselineConfig) -> Result<Projection, DetectError> {
    if proj.kind() != ProjectionKind::Attenuation {
        return Err(DetectError::WrongKind(proj.kind()));
    }
    if !(cfg.sigma >= 0.0 && (0.0..=100.0).contains(&cfg.percentile)) {
        return Err(DetectError::InvalidConfig(format!("{cfg:?}")));
    }
    let resp = hessian_response(proj, cfg.sigma);
    let scale = cfg.scale.unwrap_or_else(|| percentile(&resp, cfg.percentile));
    let data = if scale > 0.0 && scale.is_finite() {
        resp.iter().map(|r| (r / scale).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; resp.len()]
    };
    Projection::from_data(proj.rows(), proj.cols(), proj.pixel_pitch(), ProjectionKind::Probability, data)
        .map_err(DetectError::from)
}
