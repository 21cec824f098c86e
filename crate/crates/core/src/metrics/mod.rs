//! Feature statistics, Frechet distance, sharpness, evaluation reports and
//! the memorization-bias study.

mod bias;
mod features;
mod gaussian;
mod report;
mod sharpness;

use thiserror::Error;

use crate::data::DataError;
use crate::gan::GanError;
use crate::linalg::LinalgError;

pub use bias::{
    fid_bias_csv, fid_bias_experiment, fid_bias_runs, memorizer_decays, FidBiasConfig, FidBiasRow,
    FidBiasRuns, FID_BIAS_CSV_HEADER,
};
pub use features::{FeatureExtractor, PIXEL_MEAN, PIXEL_STD, RANDOM_CONV_WIDTHS};
pub use gaussian::{fit_gaussian, frechet_distance, GaussianStats, TRACE_RESIDUE_TOL};
pub use report::{
    evaluate, generate_eval_set, image_fid, split_half_fid, EvalConfig, MetricReport,
};
pub use sharpness::{sharpness, sharpness_batch};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Frechet trace residue {0} is below the clamping tolerance")]
    NegativeResidue(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Data(#[from] DataError),
}
