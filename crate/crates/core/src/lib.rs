//! Few-shot GAN domain adaptation by singular-value reparameterization.
//!
//! Pretrained layer weights are decomposed with an SVD; the singular vectors
//! are frozen and only a multiplier on each singular value is learned under an
//! adversarial objective. The crate ships a toy generator/discriminator pair
//! trained from scratch on procedural image domains, the baseline adaptation
//! schemes (full fine-tuning, discriminator freezing, per-channel scale and
//! shift), Frechet-distance evaluation in a fixed random feature space, and a
//! Monte-Carlo study of how held-out Frechet distance rewards memorization of
//! a few-shot training set.
//!
//! Modules, bottom-up:
//!
//! * [`linalg`]: tensors, SVD, symmetric eigendecomposition, convolution.
//! * [`reparam`]: layer decomposition, adaptation modes, parameter accounting.
//! * [`gan`]: toy architecture, losses, R1 penalty, training, sampling.
//! * [`metrics`]: Gaussian statistics, Frechet distance, sharpness, reports.
//! * [`data`]: procedural domains, n-shot splits, checkpoints, PNG grids.

pub mod data;
pub mod gan;
pub mod linalg;
pub mod metrics;
pub mod reparam;

mod error;

pub use error::{Error, Result};
pub use gan::{GanModel, TrainConfig};
pub use linalg::{SvdFactors, Tensor};
pub use metrics::{GaussianStats, MetricReport};
pub use reparam::{AdaptMode, DecomposedLayer};
