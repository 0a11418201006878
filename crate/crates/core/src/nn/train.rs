use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Model, NnError, Normalization};

/// One input/target pair with its spatial size `[d, h, w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub spatial: [usize; 3],
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

fn default_lr() -> f64 {
    1e-4
}
fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    8
}
fn default_max_pos_weight() -> f64 {
    50.0
}
fn default_true() -> bool {
    true
}

/// Training hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default)]
    pub seed: u64,
    /// Positive-class weight; `None` uses negatives/positives of the
    /// training set, capped at `max_pos_weight`. `Some(1.0)` is plain BCE.
    #[serde(default)]
    pub pos_weight: Option<f64>,
    #[serde(default = "default_max_pos_weight")]
    pub max_pos_weight: f64,
    /// Refit the input normalization on the training inputs first.
    #[serde(default = "default_true")]
    pub fit_normalization: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            epochs: default_epochs(),
            batch: default_batch(),
            seed: 0,
            pos_weight: None,
            max_pos_weight: default_max_pos_weight(),
            fit_normalization: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && self.batch > 0
            && self.max_pos_weight > 0.0
            && self.pos_weight.is_none_or(|w| w > 0.0 && w.is_finite());
        if ok {
            Ok(())
        } else {
            Err(NnError::InvalidConfig(format!("{self:?}")))
        }
    }

    /// The positive-class weight for `data`.
    pub fn resolve_pos_weight(&self, data: &[Sample]) -> f64 {
        if let Some(w) = self.pos_weight {
            return w;
        }
        let (mut pos, mut total) = (0.0, 0usize);
        for s in data {
            pos += s.target.iter().sum::<f64>();
            total += s.target.len();
        }
        let neg = total as f64 - pos;
        if pos <= 0.0 {
            1.0
        } else {
            (neg / pos).clamp(1.0, self.max_pos_weight)
        }
    }
}

/// Mean loss and gradient over a batch, plus per-sample losses. Samples are
/// processed in parallel and reduced in batch order.
pub fn loss_and_gradient(model: &Model, batch: &[&Sample], pos_weight: f64) -> Result<(f64, Vec<f64>, Vec<f64>), NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyData);
    }
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|s| model.sample_loss_and_gradient(s.spatial, &s.input, &s.target, pos_weight))
        .collect::<Result<_, _>>()?;
    let n = batch.len() as f64;
    let mut grad = vec![0.0; model.params.len()];
    let mut loss = 0.0;
    let mut losses = Vec::with_capacity(parts.len());
    for (l, g) in &parts {
        loss += l;
        losses.push(*l);
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad, losses))
}

/// Adam with the usual bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Minimizes the weighted BCE over `data` with Adam and returns the mean
/// training loss of each epoch.
///
/// Batches are drawn from a seeded shuffle, and per-sample losses are summed
/// in sample order, so a fixed seed gives bit-identical results.
pub fn train(model: &mut Model, data: &[Sample], cfg: &TrainConfig) -> Result<Vec<f64>, NnError> {
    cfg.validate()?;
    model.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyData);
    }
    for s in data {
        model.arch.check_input(s.spatial)?;
    }
    if cfg.fit_normalization {
        model.norm = Normalization::fit(data.iter().map(|s| s.input.as_slice()));
    }
    let pos_weight = cfg.resolve_pos_weight(data);
    let mut adam = Adam::new(model.params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut per = vec![0.0; data.len()];
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grad, losses) = loss_and_gradient(model, &batch, pos_weight)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NnError::Diverged { epoch });
            }
            for (&i, l) in chunk.iter().zip(losses) {
                per[i] = l;
            }
            adam.step(&mut model.params, &grad, cfg.lr);
        }
        history.push(per.iter().sum::<f64>() / data.len() as f64);
    }
    Ok(history)
}

/// Loss history as CSV with columns `epoch,loss`.
pub fn loss_history_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, l));
    }
    s
}
