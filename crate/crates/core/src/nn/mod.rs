//! Small dense U-shaped encoder-decoder networks in 2D and 3D with
//! hand-written backward passes, binary cross-entropy and Adam.

pub mod checkpoint;
mod layers;
mod model;
mod tensor;
mod train;

pub use layers::Conv;
pub use model::{bce, bce_with_logits, sigmoid, Architecture, Dims, Model, Normalization};
pub use tensor::Tensor;
pub use train::{loss_and_gradient, loss_history_csv, train, Adam, Sample, TrainConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("no training data")]
    EmptyData,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
