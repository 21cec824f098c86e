//! Procedural domains, n-shot splits, checkpoints and image grids.

mod checkpoint;
mod domain;
mod image;
mod split;

use thiserror::Error;

use crate::linalg::LinalgError;

pub use checkpoint::{
    checkpoint_bytes, config_hash, load_checkpoint, parse_checkpoint, save_checkpoint,
    CheckpointMeta, FORMAT_VERSION, MAGIC,
};
pub use domain::{render, sample_domain, DomainSpec, Family, Range};
pub use image::{grid_tiles, quantize, read_png, write_image_grid};
pub use split::{image_hashes, make_nshot, select, NShotSplit, SplitManifest, SUPPORTED_NSHOTS};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid domain spec: {0}")]
    InvalidSpec(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("unsupported shot count {0}; expected one of {SUPPORTED_NSHOTS:?}")]
    UnsupportedShot(usize),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("corrupt checkpoint header: {0}")]
    CorruptHeader(String),
    #[error("unknown checkpoint version {0} (supported: {FORMAT_VERSION})")]
    UnknownVersion(u32),
    #[error("truncated tensor table: {0}")]
    TruncatedTensorTable(String),
    #[error("checkpoint does not fit the architecture: {0}")]
    ShapeMismatch(String),
    #[error("image: {0}")]
    Image(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
