use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{maxpool, maxpool_backward, relu, relu_backward, upsample, upsample_backward, Conv};
use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dims {
    Two,
    Three,
}

/// U-shaped encoder-decoder: two `k`-wide convolutions with ReLU per level,
/// 2x max pooling down, nearest 2x upsampling and skip concatenation up,
/// and a 1x1 head producing one logit per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub dims: Dims,
    /// Number of pooling steps.
    pub depth: usize,
    pub base_channels: usize,
    pub kernel: usize,
}

impl Architecture {
    pub fn new_2d(depth: usize, base_channels: usize) -> Self {
        Self { dims: Dims::Two, depth, base_channels, kernel: 3 }
    }

    pub fn new_3d(depth: usize, base_channels: usize) -> Self {
        Self { dims: Dims::Three, depth, base_channels, kernel: 3 }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.base_channels == 0 || self.kernel % 2 == 0 || self.depth > 8 {
            return Err(NnError::Architecture(format!(
                "need base_channels > 0, odd kernel and depth <= 8, got {self:?}"
            )));
        }
        Ok(())
    }

    fn kernel3(&self) -> [usize; 3] {
        match self.dims {
            Dims::Two => [1, self.kernel, self.kernel],
            Dims::Three => [self.kernel; 3],
        }
    }

    pub fn pool_factor(&self) -> [usize; 3] {
        match self.dims {
            Dims::Two => [1, 2, 2],
            Dims::Three => [2, 2, 2],
        }
    }

    fn layers(&self) -> Layers {
        let k = self.kernel3();
        let mut offset = 0;
        let mut conv = |cin, cout, kernel| {
            let c = Conv { cin, cout, kernel, offset };
            offset += c.param_len();
            c
        };
        let ch = |l: usize| self.base_channels << l;
        let mut enc = Vec::new();
        let mut cin = 1;
        for l in 0..=self.depth {
            enc.push([conv(cin, ch(l), k), conv(ch(l), ch(l), k)]);
            cin = ch(l);
        }
        let mut dec = Vec::new();
        for l in (0..self.depth).rev() {
            dec.push([conv(ch(l) + ch(l + 1), ch(l), k), conv(ch(l), ch(l), k)]);
        }
        let head = conv(ch(0), 1, [1, 1, 1]);
        Layers { enc, dec, head, len: offset }
    }

    pub fn param_count(&self) -> usize {
        self.layers().len
    }

    /// Spatial sizes must be divisible by the total pooling factor.
    pub fn check_input(&self, spatial: [usize; 3]) -> Result<(), NnError> {
        let f = self.pool_factor();
        for a in 0..3 {
            let m = f[a].pow(self.depth as u32);
            if spatial[a] == 0 || spatial[a] % m != 0 {
                return Err(NnError::Shape(format!(
                    "input {spatial:?} not divisible by {m} along axis {a} for depth {}",
                    self.depth
                )));
            }
        }
        if self.dims == Dims::Two && spatial[0] != 1 {
            return Err(NnError::Shape(format!("2D network given depth {}", spatial[0])));
        }
        Ok(())
    }
}

struct Layers {
    enc: Vec<[Conv; 2]>,
    dec: Vec<[Conv; 2]>,
    head: Conv,
    len: usize,
}

/// Standardization applied to inputs before the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl Normalization {
    /// Global mean and standard deviation over all samples.
    pub fn fit<'a>(inputs: impl Iterator<Item = &'a [f64]> + Clone) -> Self {
        let (mut n, mut sum) = (0usize, 0.0);
        for x in inputs.clone() {
            n += x.len();
            sum += x.iter().sum::<f64>();
        }
        if n == 0 {
            return Self::default();
        }
        let mean = sum / n as f64;
        let var = inputs.map(|x| x.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sum::<f64>() / n as f64;
        let std = var.sqrt();
        Self { mean, std: if std > 1e-12 { std } else { 1.0 } }
    }
}

/// Network architecture, flat parameter vector and input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub params: Vec<f64>,
    pub norm: Normalization,
}

/// Activations kept for the backward pass.
struct Cache {
    input: Tensor,
    enc: Vec<[Tensor; 2]>,
    pool_idx: Vec<Vec<usize>>,
    pooled: Vec<Tensor>,
    dec_in: Vec<Tensor>,
    dec: Vec<[Tensor; 2]>,
}

impl Model {
    /// He-normal initialization from `seed`; biases start at zero.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self, NnError> {
        arch.validate()?;
        let layers = arch.layers();
        let mut params = vec![0.0; layers.len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all = layers.enc.iter().chain(&layers.dec).flatten().chain(std::iter::once(&layers.head));
        for c in all {
            let std = (2.0 / (c.cin * c.taps()) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for w in &mut params[c.offset..c.offset + c.weight_len()] {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(Self { arch, params, norm: Normalization::default() })
    }

    /// Zeroes the 1x1 head, making every output exactly 0.5.
    pub fn zero_head(&mut self) {
        let h = self.arch.layers().head;
        self.params[h.offset..h.offset + h.param_len()].fill(0.0);
    }

    pub fn validate(&self) -> Result<(), NnError> {
        self.arch.validate()?;
        if self.params.len() != self.arch.param_count() {
            return Err(NnError::Architecture(format!(
                "expected {} parameters, got {}",
                self.arch.param_count(),
                self.params.len()
            )));
        }
        if !(self.norm.std > 0.0 && self.norm.std.is_finite() && self.norm.mean.is_finite()) {
            return Err(NnError::Architecture(format!("invalid normalization {:?}", self.norm)));
        }
        Ok(())
    }

    fn normalized(&self, spatial: [usize; 3], x: &[f64]) -> Tensor {
        let data = x.iter().map(|v| (v - self.norm.mean) / self.norm.std).collect();
        Tensor::from_vec([1, spatial[0], spatial[1], spatial[2]], data)
    }

    fn run(&self, spatial: [usize; 3], x: &[f64]) -> (Tensor, Cache) {
        let l = self.arch.layers();
        let p = &self.params;
        let f = self.arch.pool_factor();
        let input = self.normalized(spatial, x);
        let mut cache = Cache { input, enc: vec![], pool_idx: vec![], pooled: vec![], dec_in: vec![], dec: vec![] };
        for (lvl, [c1, c2]) in l.enc.iter().enumerate() {
            let src = if lvl == 0 { &cache.input } else { &cache.pooled[lvl - 1] };
            let a = relu(c1.forward(p, src));
            let b = relu(c2.forward(p, &a));
            if lvl < self.arch.depth {
                let (pooled, idx) = maxpool(&b, f);
                cache.pooled.push(pooled);
                cache.pool_idx.push(idx);
            }
            cache.enc.push([a, b]);
        }
        for (i, [c1, c2]) in l.dec.iter().enumerate() {
            let lvl = self.arch.depth - 1 - i;
            let below = if i == 0 { &cache.enc[self.arch.depth][1] } else { &cache.dec[i - 1][1] };
            let cat = Tensor::concat(&cache.enc[lvl][1], &upsample(below, f));
            let a = relu(c1.forward(p, &cat));
            let b = relu(c2.forward(p, &a));
            cache.dec_in.push(cat);
            cache.dec.push([a, b]);
        }
        let last = if self.arch.depth == 0 { &cache.enc[0][1] } else { &cache.dec[self.arch.depth - 1][1] };
        let logits = l.head.forward(p, last);
        (logits, cache)
    }

    /// Per-voxel logits for a single-channel input of the given spatial size.
    pub fn logits(&self, spatial: [usize; 3], x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check(spatial, x)?;
        Ok(self.run(spatial, x).0.data)
    }

    /// Per-voxel probabilities.
    pub fn predict(&self, spatial: [usize; 3], x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.logits(spatial, x)?.into_iter().map(sigmoid).collect())
    }

    fn check(&self, spatial: [usize; 3], x: &[f64]) -> Result<(), NnError> {
        self.arch.check_input(spatial)?;
        if x.len() != spatial.iter().product::<usize>() {
            return Err(NnError::Shape(format!("{} values for spatial size {spatial:?}", x.len())));
        }
        Ok(())
    }

    /// Weighted BCE over one sample and its gradient w.r.t. the parameters.
    /// The loss is the mean over voxels.
    pub fn sample_loss_and_gradient(
        &self,
        spatial: [usize; 3],
        x: &[f64],
        target: &[f64],
        pos_weight: f64,
    ) -> Result<(f64, Vec<f64>), NnError> {
        self.check(spatial, x)?;
        if target.len() != x.len() {
            return Err(NnError::Shape(format!("target has {} values, input {}", target.len(), x.len())));
        }
        let (logits, cache) = self.run(spatial, x);
        let n = logits.data.len() as f64;
        let mut loss = 0.0;
        let mut dz = Tensor::zeros(logits.shape);
        for ((z, y), g) in logits.data.iter().zip(target).zip(dz.data.iter_mut()) {
            loss += bce_with_logits(*z, *y, pos_weight);
            let s = sigmoid(*z);
            *g = (pos_weight * y * (s - 1.0) + (1.0 - y) * s) / n;
        }
        let grad = self.backward(&cache, dz);
        Ok((loss / n, grad))
    }

    fn backward(&self, cache: &Cache, dz: Tensor) -> Vec<f64> {
        let l = self.arch.layers();
        let p = &self.params;
        let f = self.arch.pool_factor();
        let depth = self.arch.depth;
        let mut grad = vec![0.0; self.params.len()];
        let last = if depth == 0 { &cache.enc[0][1] } else { &cache.dec[depth - 1][1] };
        let mut d = l.head.backward(p, last, &dz, &mut grad, true).expect("dx requested");
        // Gradients flowing into each encoder level's output through skips.
        let mut skip_grad: Vec<Option<Tensor>> = vec![None; depth + 1];
        for i in (0..l.dec.len()).rev() {
            let [c1, c2] = &l.dec[i];
            let lvl = depth - 1 - i;
            let [a, b] = &cache.dec[i];
            let db = relu_backward(b, d);
            let da = relu_backward(a, c2.backward(p, a, &db, &mut grad, true).expect("dx"));
            let dcat = c1.backward(p, &cache.dec_in[i], &da, &mut grad, true).expect("dx");
            let (dskip, dup) = dcat.split(cache.enc[lvl][1].channels());
            skip_grad[lvl] = Some(dskip);
            let below_shape = if i == 0 { cache.enc[depth][1].shape } else { cache.dec[i - 1][1].shape };
            d = upsample_backward(below_shape, f, &dup);
        }
        // `d` now holds the gradient into the bottom level output.
        for lvl in (0..=depth).rev() {
            let [c1, c2] = &l.enc[lvl];
            let [a, b] = &cache.enc[lvl];
            let mut db = if lvl == depth { d.clone() } else { skip_grad[lvl].take().expect("skip grad") };
            if lvl < depth {
                let dpool = maxpool_backward(b.shape, &cache.pool_idx[lvl], &d);
                db.data.iter_mut().zip(&dpool.data).for_each(|(x, y)| *x += y);
            }
            let db = relu_backward(b, db);
            let da = relu_backward(a, c2.backward(p, a, &db, &mut grad, true).expect("dx"));
            let src = if lvl == 0 { &cache.input } else { &cache.pooled[lvl - 1] };
            match c1.backward(p, src, &da, &mut grad, lvl > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
        grad
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `-(w y log s(z) + (1 - y) log(1 - s(z)))` computed stably from the logit.
pub fn bce_with_logits(z: f64, y: f64, pos_weight: f64) -> f64 {
    pos_weight * y * softplus(-z) + (1.0 - y) * softplus(z)
}

/// Mean BCE of probabilities clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce(probs: &[f64], targets: &[f64]) -> f64 {
    let n = probs.len().max(1) as f64;
    probs
        .iter()
        .zip(targets)
        .map(|(p, y)| {
            let p = p.clamp(1e-7, 1.0 - 1e-7);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}
