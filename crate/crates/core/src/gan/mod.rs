//! Toy generator/discriminator pair, logistic loss with R1 penalty, the
//! fixed-budget training loop and sampling utilities.

mod layer;
mod loss;
mod model;
mod network;
mod sample;
mod train;

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::reparam::ReparamError;

pub use layer::{Layer, LayerParams, Slot};
pub use loss::{gan_losses, logit_gradients, r1_penalty, softplus};
pub use model::{ArchConfig, GanModel, Net, LATENT_MEAN_SAMPLES};
pub use network::{Activation, Stage, LEAKY_SLOPE};
pub(crate) use network::avgpool2x;
pub use sample::{
    explore_svd, interpolate, latent_for_seed, latents, sample, sample_seeds, truncate, Exploration,
};
pub use train::{
    train, History, Snapshot, StepRecord, TrainConfig, TrainOutput, ADAM_BETA1, ADAM_BETA2,
    ADAM_EPS, DIVERGENCE_PATIENCE,
};

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {what}")]
    NonFinite { what: String },
    #[error("training diverged: {patience} consecutive non-finite steps ending at step {step}")]
    Diverged {
        step: usize,
        patience: usize,
        history: Box<History>,
    },
    #[error(transparent)]
    Reparam(#[from] ReparamError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
