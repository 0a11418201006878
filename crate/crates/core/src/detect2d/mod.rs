//! Pixel-wise feature detection: a trainable encoder-decoder classifier, a
//! deterministic Hessian baseline, block tiling with probability averaging,
//! and thresholding.

mod baseline;
mod keypoints;
mod morph;
mod tiling;

pub use baseline::{baseline_detect, hessian_response, percentile, BaselineConfig};
pub use keypoints::{keypoints_2d, render_keypoints, KeypointConfig};
pub use morph::{dilate_binary, thin_binary};
pub use tiling::{merge_tiles, tile_image, tile_offsets, Tile, TileSpec};

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::nn::{self, Architecture, Dims, Model, NnError, Sample, TrainConfig};
use crate::phantom::TrainingPair;
use crate::projection::{Projection, ProjectionError, ProjectionKind};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("tiling: {0}")]
    Tiling(String),
    #[error("pixel ({row}, {col}) is not covered by any tile")]
    Coverage { row: usize, col: usize },
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("expected an attenuation image, got {0:?}")]
    WrongKind(ProjectionKind),
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("expected a 2D network")]
    NotTwoDimensional,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

/// Probability map; values in `[0, 1]`.
pub type FeatureMap2D = Projection;

/// Encoder-decoder pixel classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelClassifier {
    pub model: Model,
}

impl PixelClassifier {
    pub fn new(depth: usize, base_channels: usize, seed: u64) -> Result<Self, DetectError> {
        Ok(Self { model: Model::new(Architecture::new_2d(depth, base_channels), seed)? })
    }

    pub fn from_model(model: Model) -> Result<Self, DetectError> {
        if model.arch.dims != Dims::Two {
            return Err(DetectError::NotTwoDimensional);
        }
        model.validate()?;
        Ok(Self { model })
    }

    pub fn load(path: &Path) -> Result<Self, DetectError> {
        Self::from_model(nn::checkpoint::load(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), DetectError> {
        Ok(nn::checkpoint::save(&self.model, path)?)
    }

    /// Per-pixel probabilities for one block.
    pub fn predict(&self, block: &Projection) -> Result<FeatureMap2D, DetectError> {
        let p = self.model.predict([1, block.rows(), block.cols()], block.data())?;
        Ok(Projection::from_data(block.rows(), block.cols(), block.pixel_pitch(), ProjectionKind::Probability, p)?)
    }

    pub fn loss_and_gradient(&self, batch: &[TrainingPair], pos_weight: f64) -> Result<(f64, Vec<f64>), DetectError> {
        let samples = to_samples(batch);
        let refs: Vec<&Sample> = samples.iter().collect();
        let (l, g, _) = nn::loss_and_gradient(&self.model, &refs, pos_weight)?;
        Ok((l, g))
    }

    /// Trains in place and returns the per-epoch loss history.
    pub fn train(&mut self, data: &[TrainingPair], cfg: &TrainConfig) -> Result<Vec<f64>, DetectError> {
        Ok(nn::train(&mut self.model, &to_samples(data), cfg)?)
    }
}

pub fn to_samples(pairs: &[TrainingPair]) -> Vec<Sample> {
    pairs
        .iter()
        .map(|p| Sample {
            spatial: [1, p.input.rows(), p.input.cols()],
            input: p.input.data().to_vec(),
            target: p.target.data().to_vec(),
        })
        .collect()
}

/// Runs `detect` on every block of `img` in parallel and averages the
/// overlapping block probabilities.
pub fn detect_tiled<F>(img: &Projection, block: usize, spec: TileSpec, detect: F) -> Result<FeatureMap2D, DetectError>
where
    F: Fn(&Projection) -> Result<FeatureMap2D, DetectError> + Sync,
{
    let tiles = tile_image(img, block, spec)?;
    let maps: Vec<Tile> = tiles
        .into_par_iter()
        .map(|t| Ok(Tile { row: t.row, col: t.col, data: detect(&t.data)? }))
        .collect::<Result<_, DetectError>>()?;
    merge_tiles(&maps, img.rows(), img.cols())
}

/// Binary map: 1 where `p >= tau`.
pub fn threshold_map(map: &FeatureMap2D, tau: f64) -> Result<Projection, DetectError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(DetectError::InvalidThreshold(tau));
    }
    Ok(map.map(|p| if p >= tau { 1.0 } else { 0.0 }).with_kind(ProjectionKind::Probability))
}
