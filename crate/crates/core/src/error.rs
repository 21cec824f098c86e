use thiserror::Error;

use crate::data::DataError;
use crate::gan::GanError;
use crate::linalg::LinalgError;
use crate::metrics::MetricsError;
use crate::reparam::ReparamError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Umbrella error for callers that drive the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Reparam(#[from] ReparamError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
}
