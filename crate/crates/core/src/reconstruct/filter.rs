use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::ReconstructError;
use crate::geometry::ConeBeamGeometry;
use crate::projection::{Projection, ProjectionKind};

/// Apodization applied to the ramp in frequency space.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Ramlak,
    Hann,
}

/// Discrete Ram-Lak kernel value at integer offset `n` for sample spacing `tau`.
pub fn ramlak_kernel(n: i64, tau: f64) -> f64 {
    if n == 0 {
        1.0 / (4.0 * tau * tau)
    } else if n % 2 == 0 {
        0.0
    } else {
        let d = n as f64 * PI * tau;
        -1.0 / (d * d)
    }
}

/// Row-wise convolution with the Ram-Lak kernel, using the projection's own
/// pixel pitch as the sample spacing. An impulse of height 1 yields the kernel
/// values themselves; no spacing factor is applied to the sum.
pub fn ramp_filter(proj: &Projection, window: Window) -> Result<Projection, ReconstructError> {
    ramp_filter_with_spacing(proj, proj.pixel_pitch(), window)
}

/// [`ramp_filter`] with an explicit kernel spacing `tau`.
///
/// Rows are zero-padded to the next power of two at least twice their length
/// so the circular FFT convolution equals the linear one.
pub fn ramp_filter_with_spacing(proj: &Projection, tau: f64, window: Window) -> Result<Projection, ReconstructError> {
    if proj.kind() == ProjectionKind::Intensity {
        return Err(ReconstructError::WrongKind(proj.kind()));
    }
    let cols = proj.cols();
    let len = (2 * cols).next_power_of_two();
    let half = len / 2;
    let mut kernel: Vec<Complex<f64>> = (0..len)
        .map(|i| {
            let n = if i <= half { i as i64 } else { i as i64 - len as i64 };
            Complex::new(ramlak_kernel(n, tau), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    fwd.process(&mut kernel);
    if window == Window::Hann {
        for (k, h) in kernel.iter_mut().enumerate() {
            *h *= 0.5 * (1.0 + (2.0 * PI * k as f64 / len as f64).cos());
        }
    }
    let scale = 1.0 / len as f64;
    let mut out = Projection::zeros(proj.rows(), cols, proj.pixel_pitch(), ProjectionKind::Attenuation);
    out.data_mut()
        .par_chunks_mut(cols)
        .zip(proj.data().par_chunks(cols))
        .for_each(|(dst, src)| {
            let mut buf = vec![Complex::new(0.0, 0.0); len];
            for (b, s) in buf.iter_mut().zip(src) {
                b.re = *s;
            }
            fwd.process(&mut buf);
            for (b, h) in buf.iter_mut().zip(&kernel) {
                *b *= *h;
            }
            inv.process(&mut buf);
            for (d, b) in dst.iter_mut().zip(&buf) {
                *d = b.re * scale;
            }
        });
    Ok(out)
}

/// FDK pre-processing of one view: cosine weighting and ramp filtering with
/// detector coordinates scaled to the rotation axis, including the spacing
/// factor of the discrete convolution integral.
pub fn fdk_prefilter(proj: &Projection, geom: &ConeBeamGeometry, window: Window) -> Result<Projection, ReconstructError> {
    geom.validate()?;
    let (cu, cv) = geom.principal_point();
    let mut weighted = proj.clone().with_kind(ProjectionKind::Attenuation);
    let cols = proj.cols();
    let pitch = geom.pixel_pitch;
    weighted.data_mut().par_chunks_mut(cols).enumerate().for_each(|(r, row)| {
        let b = (r as f64 - cv) * pitch;
        for (c, v) in row.iter_mut().enumerate() {
            let a = (c as f64 - cu) * pitch;
            *v *= geom.sdd / (geom.sdd * geom.sdd + a * a + b * b).sqrt();
        }
    });
    let tau = pitch * geom.sod / geom.sdd;
    let mut out = ramp_filter_with_spacing(&weighted, tau, window)?;
    out.data_mut().iter_mut().for_each(|v| *v *= tau);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_in_zero_out() {
        let p = Projection::zeros(3, 17, 0.5, ProjectionKind::Probability);
        let f = ramp_filter(&p, Window::Ramlak).unwrap();
        assert!(f.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn impulse_reproduces_kernel() {
        let cols = 64;
        let tau = 0.4;
        let mut p = Projection::zeros(1, cols, tau, ProjectionKind::Attenuation);
        let m0 = 23;
        p.set(0, m0, 1.0);
        let f = ramp_filter(&p, Window::Ramlak).unwrap();
        for n in 0..cols {
            // Direct spatial convolution of the impulse.
            let expected = ramlak_kernel(n as i64 - m0 as i64, tau);
            assert!((f.get(0, n) - expected).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn matches_direct_convolution() {
        let cols = 37;
        let data: Vec<f64> = (0..cols).map(|i| ((i * 7919) % 13) as f64 / 13.0).collect();
        let p = Projection::from_data(1, cols, 1.0, ProjectionKind::Attenuation, data.clone()).unwrap();
        let f = ramp_filter(&p, Window::Ramlak).unwrap();
        for n in 0..cols {
            let direct: f64 = (0..cols).map(|m| ramlak_kernel(n as i64 - m as i64, 1.0) * data[m]).sum();
            assert!((f.get(0, n) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_row_has_small_mean() {
        // Truncating the kernel to the row leaks DC of order ln(N) / (π² N τ²).
        let p = Projection::filled(1, 1024, 1.0, ProjectionKind::Attenuation, 3.0);
        let f = ramp_filter(&p, Window::Ramlak).unwrap();
        let mean = f.data().iter().sum::<f64>() / 1024.0;
        assert!(mean.abs() < 1e-3 * 3.0, "{mean}");
    }

    #[test]
    fn hann_damps_high_frequencies() {
        let mut p = Projection::zeros(1, 32, 1.0, ProjectionKind::Attenuation);
        for c in 0..32 {
            p.set(0, c, if c % 2 == 0 { 1.0 } else { -1.0 });
        }
        let r = ramp_filter(&p, Window::Ramlak).unwrap();
        let h = ramp_filter(&p, Window::Hann).unwrap();
        let e = |x: &Projection| x.data()[8..24].iter().map(|v| v * v).sum::<f64>();
        assert!(e(&h) < 0.1 * e(&r));
    }

    #[test]
    fn rejects_intensity() {
        let p = Projection::filled(1, 4, 1.0, ProjectionKind::Intensity, 1.0);
        assert!(ramp_filter(&p, Window::Ramlak).is_err());
    }
}
