//! Layer kernels with explicit forward and backward passes.

use rayon::prelude::*;

use super::Tensor;

/// Columns per parallel GEMM chunk. Fixed so results do not depend on the
/// number of worker threads.
const CHUNK: usize = 4096;

/// `c[m x n] = a[m x k] * b[k x n]` with explicit strides (row, col).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
    (rsc, csc): (isize, isize),
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: every index touched is `i*rs + j*cs` with `i < rows`,
    // `j < cols`; callers pass slices covering those extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Convolution with odd kernel `[kd, kh, kw]`, stride 1, zero "same" padding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv {
    pub cin: usize,
    pub cout: usize,
    pub kernel: [usize; 3],
    /// Offset of the weights in the flat parameter vector; bias follows.
    pub offset: usize,
}

impl Conv {
    pub fn taps(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.taps()
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.cout
    }

    fn split<'a>(&self, params: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        let w = &params[self.offset..self.offset + self.weight_len()];
        let b = &params[self.offset + self.weight_len()..self.offset + self.param_len()];
        (w, b)
    }

    /// Column matrix `[cin * taps, plane]` of the zero-padded input.
    fn im2col(&self, x: &Tensor) -> Vec<f64> {
        let [d, h, w] = x.spatial();
        let [kd, kh, kw] = self.kernel;
        let (pd, ph, pw) = ((kd / 2) as isize, (kh / 2) as isize, (kw / 2) as isize);
        let plane = x.plane();
        let mut cols = vec![0.0; self.cin * self.taps() * plane];
        cols.par_chunks_mut(plane).enumerate().for_each(|(row, dst)| {
            let ci = row / self.taps();
            let t = row % self.taps();
            let (a, b, c) = ((t / (kh * kw)) as isize, ((t / kw) % kh) as isize, (t % kw) as isize);
            let src = x.channel(ci);
            for z in 0..d {
                let zz = z as isize + a - pd;
                if zz < 0 || zz >= d as isize {
                    continue;
                }
                for y in 0..h {
                    let yy = y as isize + b - ph;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    let x0 = (pw - c).max(0) as usize;
                    let x1 = ((w as isize) + pw - c).min(w as isize).max(0) as usize;
                    let sbase = (zz as usize * h + yy as usize) * w;
                    let dbase = (z * h + y) * w;
                    for xo in x0..x1 {
                        dst[dbase + xo] = src[sbase + (xo as isize + c - pw) as usize];
                    }
                }
            }
        });
        cols
    }

    fn col2im(&self, cols: &[f64], shape: [usize; 4]) -> Tensor {
        let [_, d, h, w] = shape;
        let [kd, kh, kw] = self.kernel;
        let (pd, ph, pw) = ((kd / 2) as isize, (kh / 2) as isize, (kw / 2) as isize);
        let plane = d * h * w;
        let taps = self.taps();
        let mut out = Tensor::zeros(shape);
        out.data.par_chunks_mut(plane).enumerate().for_each(|(ci, dst)| {
            for t in 0..taps {
                let (a, b, c) = ((t / (kh * kw)) as isize, ((t / kw) % kh) as isize, (t % kw) as isize);
                let src = &cols[(ci * taps + t) * plane..(ci * taps + t + 1) * plane];
                for z in 0..d {
                    let zz = z as isize + a - pd;
                    if zz < 0 || zz >= d as isize {
                        continue;
                    }
                    for y in 0..h {
                        let yy = y as isize + b - ph;
                        if yy < 0 || yy >= h as isize {
                            continue;
                        }
                        let x0 = (pw - c).max(0) as usize;
                        let x1 = ((w as isize) + pw - c).min(w as isize).max(0) as usize;
                        let dbase = (zz as usize * h + yy as usize) * w;
                        let sbase = (z * h + y) * w;
                        for xo in x0..x1 {
                            dst[dbase + (xo as isize + c - pw) as usize] += src[sbase + xo];
                        }
                    }
                }
            }
        });
        out
    }

    pub fn forward(&self, params: &[f64], x: &Tensor) -> Tensor {
        assert_eq!(x.channels(), self.cin, "conv input channels");
        let (wts, bias) = self.split(params);
        let plane = x.plane();
        let k = self.cin * self.taps();
        let cols = if self.taps() == 1 { x.data.clone() } else { self.im2col(x) };
        let mut out = Tensor::zeros([self.cout, x.shape[1], x.shape[2], x.shape[3]]);
        for (o, b) in bias.iter().enumerate() {
            out.data[o * plane..(o + 1) * plane].fill(*b);
        }
        // Column blocks of the output are independent.
        let starts: Vec<usize> = (0..plane).step_by(CHUNK).collect();
        let ptr = SendPtr(out.data.as_mut_ptr());
        starts.par_iter().for_each(|&s| {
            let n = CHUNK.min(plane - s);
            let p = &ptr;
            // SAFETY: chunks write disjoint column ranges of `out`.
            let c = unsafe { std::slice::from_raw_parts_mut(p.0.add(s), self.cout * plane - s) };
            gemm(self.cout, k, n, wts, (k as isize, 1), &cols[s..], (plane as isize, 1), c, (plane as isize, 1), 1.0);
        });
        out
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, params: &[f64], x: &Tensor, dy: &Tensor, grad: &mut [f64], need_dx: bool) -> Option<Tensor> {
        let (wts, _) = self.split(params);
        let plane = x.plane();
        let k = self.cin * self.taps();
        let cols = if self.taps() == 1 { x.data.clone() } else { self.im2col(x) };
        let (gw, gb) = grad[self.offset..self.offset + self.param_len()].split_at_mut(self.weight_len());
        for (o, g) in gb.iter_mut().enumerate() {
            *g += dy.data[o * plane..(o + 1) * plane].iter().sum::<f64>();
        }
        // dW = dY * cols^T, reduced over fixed column chunks in order.
        let starts: Vec<usize> = (0..plane).step_by(CHUNK).collect();
        let partial: Vec<Vec<f64>> = starts
            .par_iter()
            .map(|&s| {
                let n = CHUNK.min(plane - s);
                let mut acc = vec![0.0; self.cout * k];
                gemm(self.cout, n, k, &dy.data[s..], (plane as isize, 1), &cols[s..], (1, plane as isize), &mut acc, (k as isize, 1), 0.0);
                acc
            })
            .collect();
        for p in &partial {
            for (g, v) in gw.iter_mut().zip(p) {
                *g += v;
            }
        }
        if !need_dx {
            return None;
        }
        let mut dcols = vec![0.0; k * plane];
        let ptr = SendPtr(dcols.as_mut_ptr());
        starts.par_iter().for_each(|&s| {
            let n = CHUNK.min(plane - s);
            let p = &ptr;
            // SAFETY: chunks write disjoint column ranges of `dcols`.
            let c = unsafe { std::slice::from_raw_parts_mut(p.0.add(s), k * plane - s) };
            gemm(k, self.cout, n, wts, (1, k as isize), &dy.data[s..], (plane as isize, 1), c, (plane as isize, 1), 0.0);
        });
        Some(if self.taps() == 1 { Tensor::from_vec(x.shape, dcols) } else { self.col2im(&dcols, x.shape) })
    }
}

struct SendPtr(*mut f64);
// SAFETY: only used to hand disjoint sub-slices to rayon tasks.
unsafe impl Sync for SendPtr {}
unsafe impl Send for SendPtr {}

pub fn relu(mut x: Tensor) -> Tensor {
    x.data.iter_mut().for_each(|v| *v = v.max(0.0));
    x
}

/// Backward of ReLU given its output.
pub fn relu_backward(y: &Tensor, mut dy: Tensor) -> Tensor {
    dy.data.iter_mut().zip(&y.data).for_each(|(g, v)| {
        if *v <= 0.0 {
            *g = 0.0
        }
    });
    dy
}

/// Max pooling with window = stride = `f` per spatial axis. Returns the
/// pooled tensor and the flat source index of each maximum.
pub fn maxpool(x: &Tensor, f: [usize; 3]) -> (Tensor, Vec<usize>) {
    let [c, d, h, w] = x.shape;
    let (od, oh, ow) = (d / f[0], h / f[1], w / f[2]);
    let mut out = Tensor::zeros([c, od, oh, ow]);
    let mut idx = vec![0usize; out.data.len()];
    let mut o = 0;
    for ci in 0..c {
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut bi = 0;
                    for a in 0..f[0] {
                        for b in 0..f[1] {
                            for cc in 0..f[2] {
                                let i = ((ci * d + z * f[0] + a) * h + y * f[1] + b) * w + xx * f[2] + cc;
                                if x.data[i] > best {
                                    best = x.data[i];
                                    bi = i;
                                }
                            }
                        }
                    }
                    out.data[o] = best;
                    idx[o] = bi;
                    o += 1;
                }
            }
        }
    }
    (out, idx)
}

pub fn maxpool_backward(shape: [usize; 4], idx: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(shape);
    for (g, &i) in dy.data.iter().zip(idx) {
        dx.data[i] += g;
    }
    dx
}

/// Nearest-neighbour upsampling by `f` per spatial axis.
pub fn upsample(x: &Tensor, f: [usize; 3]) -> Tensor {
    let [c, d, h, w] = x.shape;
    let (od, oh, ow) = (d * f[0], h * f[1], w * f[2]);
    let mut out = Tensor::zeros([c, od, oh, ow]);
    let mut o = 0;
    for ci in 0..c {
        for z in 0..od {
            for y in 0..oh {
                let base = ((ci * d + z / f[0]) * h + y / f[1]) * w;
                for xx in 0..ow {
                    out.data[o] = x.data[base + xx / f[2]];
                    o += 1;
                }
            }
        }
    }
    out
}

pub fn upsample_backward(shape: [usize; 4], f: [usize; 3], dy: &Tensor) -> Tensor {
    let [c, d, h, w] = shape;
    let (od, oh, ow) = (d * f[0], h * f[1], w * f[2]);
    let mut dx = Tensor::zeros(shape);
    let mut o = 0;
    for ci in 0..c {
        for z in 0..od {
            for y in 0..oh {
                let base = ((ci * d + z / f[0]) * h + y / f[1]) * w;
                for xx in 0..ow {
                    dx.data[base + xx / f[2]] += dy.data[o];
                    o += 1;
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(conv: &Conv, params: &[f64], x: &Tensor) -> Tensor {
        let [_, d, h, w] = x.shape;
        let [kd, kh, kw] = conv.kernel;
        let mut out = Tensor::zeros([conv.cout, d, h, w]);
        for o in 0..conv.cout {
            for z in 0..d {
                for y in 0..h {
                    for xx in 0..w {
                        let mut s = params[conv.offset + conv.weight_len() + o];
                        for ci in 0..conv.cin {
                            for a in 0..kd {
                                for b in 0..kh {
                                    for c in 0..kw {
                                        let (zz, yy, xi) = (
                                            z as isize + a as isize - (kd / 2) as isize,
                                            y as isize + b as isize - (kh / 2) as isize,
                                            xx as isize + c as isize - (kw / 2) as isize,
                                        );
                                        if zz < 0 || yy < 0 || xi < 0 || zz >= d as isize || yy >= h as isize || xi >= w as isize {
                                            continue;
                                        }
                                        let wi = ((o * conv.cin + ci) * kd + a) * kh * kw + b * kw + c;
                                        let xv = x.data[((ci * d + zz as usize) * h + yy as usize) * w + xi as usize];
                                        s += params[conv.offset + wi] * xv;
                                    }
                                }
                            }
                        }
                        out.data[((o * d + z) * h + y) * w + xx] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive() {
        let conv = Conv { cin: 2, cout: 3, kernel: [3, 3, 3], offset: 5 };
        let params: Vec<f64> = (0..5 + conv.param_len()).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1).collect();
        let x = Tensor::from_vec([2, 3, 4, 5], (0..120).map(|i| (i as f64 * 0.31).sin()).collect());
        let a = conv.forward(&params, &x);
        let b = naive_conv(&conv, &params, &x);
        for (p, q) in a.data.iter().zip(&b.data) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <conv(x) - b, dy> = <x, dx> for the linear part.
        let conv = Conv { cin: 2, cout: 2, kernel: [1, 3, 3], offset: 0 };
        let mut params: Vec<f64> = (0..conv.param_len()).map(|i| (i as f64 * 0.7).cos()).collect();
        for b in &mut params[conv.weight_len()..] {
            *b = 0.0;
        }
        let x = Tensor::from_vec([2, 1, 4, 6], (0..48).map(|i| (i as f64 * 0.13).sin()).collect());
        let dy = Tensor::from_vec([2, 1, 4, 6], (0..48).map(|i| (i as f64 * 0.29).cos()).collect());
        let y = conv.forward(&params, &x);
        let mut g = vec![0.0; params.len()];
        let dx = conv.backward(&params, &x, &dy, &mut g, true).unwrap();
        let lhs: f64 = y.data.iter().zip(&dy.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        // <dW, W> also equals <y, dy> when the bias is zero.
        let gw: f64 = g[..conv.weight_len()].iter().zip(&params).map(|(a, b)| a * b).sum();
        assert!((gw - lhs).abs() < 1e-10);
    }

    #[test]
    fn pool_and_upsample() {
        let x = Tensor::from_vec([1, 1, 2, 4], vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 8.0, 1.0]);
        let (p, idx) = maxpool(&x, [1, 2, 2]);
        assert_eq!(p.data, vec![5.0, 8.0]);
        assert_eq!(idx, vec![1, 6]);
        let u = upsample(&p, [1, 2, 2]);
        assert_eq!(u.data, vec![5.0, 5.0, 8.0, 8.0, 5.0, 5.0, 8.0, 8.0]);
        let du = upsample_backward(p.shape, [1, 2, 2], &u);
        assert_eq!(du.data, vec![20.0, 32.0]);
    }
}
