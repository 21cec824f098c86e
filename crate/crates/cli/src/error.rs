use std::io;
use std::path::Path;

use svadapt::data::DataError;
use svadapt::gan::GanError;
use svadapt::linalg::LinalgError;
use svadapt::metrics::MetricsError;
use svadapt::reparam::ReparamError;

/// Process exit statuses; harness scripts branch on these.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const DIVERGENCE: u8 = 3;
    pub const SHAPE_MISMATCH: u8 = 4;
    pub const INTEGRITY: u8 = 5;
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(exit::USAGE, message)
    }

    pub fn shape(message: impl Into<String>) -> Self {
        Self::new(exit::SHAPE_MISMATCH, message)
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        Self::new(exit::FAILURE, format!("{}: {err}", path.display()))
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn linalg_code(e: &LinalgError) -> u8 {
    match e {
        LinalgError::ShapeMismatch(_)
        | LinalgError::Rank { .. }
        | LinalgError::DataLength { .. }
        | LinalgError::InvalidShape(_) => exit::SHAPE_MISMATCH,
        _ => exit::FAILURE,
    }
}

fn reparam_code(e: &ReparamError) -> u8 {
    match e {
        ReparamError::Linalg(e) => linalg_code(e),
        ReparamError::UnsupportedRank(_) | ReparamError::ShapeMismatch(_) => exit::SHAPE_MISMATCH,
        ReparamError::UnknownMode(_) => exit::USAGE,
    }
}

fn gan_code(e: &GanError) -> u8 {
    match e {
        GanError::Config(_) => exit::USAGE,
        GanError::Shape(_) => exit::SHAPE_MISMATCH,
        GanError::Diverged { .. } => exit::DIVERGENCE,
        GanError::NonFinite { .. } => exit::FAILURE,
        GanError::Reparam(e) => reparam_code(e),
        GanError::Linalg(e) => linalg_code(e),
    }
}

fn data_code(e: &DataError) -> u8 {
    match e {
        DataError::InvalidSpec(_) | DataError::Split(_) | DataError::UnsupportedShot(_) => exit::USAGE,
        DataError::Integrity(_)
        | DataError::CorruptHeader(_)
        | DataError::UnknownVersion(_)
        | DataError::TruncatedTensorTable(_) => exit::INTEGRITY,
        DataError::ShapeMismatch(_) => exit::SHAPE_MISMATCH,
        DataError::Linalg(e) => linalg_code(e),
        DataError::Image(_) | DataError::Json(_) | DataError::Io(_) => exit::FAILURE,
    }
}

fn metrics_code(e: &MetricsError) -> u8 {
    match e {
        MetricsError::TooFewSamples(_) | MetricsError::Config(_) => exit::USAGE,
        MetricsError::DimensionMismatch(..) => exit::SHAPE_MISMATCH,
        MetricsError::Gan(e) => gan_code(e),
        MetricsError::Data(e) => data_code(e),
        MetricsError::Linalg(e) => linalg_code(e),
        _ => exit::FAILURE,
    }
}

macro_rules! from_core {
    ($ty:ty, $code:ident) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                Self::new($code(&e), e.to_string())
            }
        }
    };
}

from_core!(LinalgError, linalg_code);
from_core!(ReparamError, reparam_code);
from_core!(GanError, gan_code);
from_core!(DataError, data_code);
from_core!(MetricsError, metrics_code);

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(exit::FAILURE, e.to_string())
    }
}
