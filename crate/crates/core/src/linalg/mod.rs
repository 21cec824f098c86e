//! Small deterministic numerical kernel: tensors, SVD, symmetric
//! eigendecomposition, PSD square roots and patch-expanded convolution.
//!
//! Everything here is a pure function of its inputs. Decompositions accumulate
//! in `f64` and round their results to `f32`.

mod conv;
mod eig;
pub(crate) mod gemm;
mod svd;
mod tensor;

use thiserror::Error;

pub(crate) use conv::{nchw_to_rows, ConvGeom};
pub use conv::{conv2d, flatten_conv, unflatten_conv, Padding};
pub(crate) use eig::{psd_eig_f64, sqrtm_psd_f64};
pub use eig::{f32_psd_tol, sqrtm_psd, sym_eig, SymEig, PSD_TOL, SYMMETRY_TOL};
pub use svd::{reconstruct, svd, SvdFactors, ROTATION_TOL};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("invalid tensor shape {0:?}: need 1-4 positive extents")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("expected a rank-{expected} tensor, got rank {got}")]
    Rank { expected: usize, got: usize },
    #[error("non-finite value {value} at index {index:?}")]
    NonFinite { index: Vec<usize>, value: f32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive semi-definite (eigenvalue {min_eigenvalue:e}, largest {max_eigenvalue:e})")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },
}
