//! Layer reparameterization for adaptation.
//!
//! A pretrained weight `W0` is decomposed as `U0 diag(sigma0) V0^T` (conv
//! kernels are flattened to `(k^2 c_in) x c_out` first). Adaptation keeps `U0`,
//! `V0`, `sigma0` and the bias frozen and learns a multiplier vector `lambda`,
//! so the effective weight is `U0 diag(lambda * sigma0) V0^T`. `lambda` starts
//! at one, which reproduces `W0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    self, conv2d, flatten_conv, reconstruct, unflatten_conv, LinalgError, Padding, SvdFactors,
    Tensor,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReparamError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("layer weight must be rank 2 (dense) or rank 4 (conv), got rank {0}")]
    UnsupportedRank(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown adaptation method {0:?}")]
    UnknownMode(String),
}

/// Which parameters of a layer an adaptation scheme may change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdaptMode {
    /// Everything frozen.
    Pretrain,
    /// Every weight learnable.
    Tgan,
    /// Weights learnable except in the frozen lower discriminator layers.
    FreezeD,
    /// Frozen conv weights with learnable per-channel scale and shift.
    Ssgan,
    /// Frozen singular vectors with learnable singular-value multipliers.
    Fsgan,
}

impl AdaptMode {
    pub const ALL: [AdaptMode; 5] = [
        AdaptMode::Pretrain,
        AdaptMode::Tgan,
        AdaptMode::FreezeD,
        AdaptMode::Ssgan,
        AdaptMode::Fsgan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AdaptMode::Pretrain => "pretrain",
            AdaptMode::Tgan => "tgan",
            AdaptMode::FreezeD => "freezed",
            AdaptMode::Ssgan => "ssgan",
            AdaptMode::Fsgan => "fsgan",
        }
    }
}

impl fmt::Display for AdaptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdaptMode {
    type Err = ReparamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AdaptMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ReparamError::UnknownMode(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv { k: usize, pad: Padding },
}

/// Weight geometry used for parameter accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerShape {
    /// `m x n` fully-connected weight (inputs x outputs).
    Dense { m: usize, n: usize },
    Conv { k: usize, c_in: usize, c_out: usize },
}

impl LayerShape {
    pub fn of_weight(w: &Tensor) -> Result<Self, ReparamError> {
        match *w.shape() {
            [m, n] => Ok(LayerShape::Dense { m, n }),
            [k, _, c_in, c_out] => Ok(LayerShape::Conv { k, c_in, c_out }),
            _ => Err(ReparamError::UnsupportedRank(w.rank())),
        }
    }

    /// Rows and columns of the (flattened) weight matrix.
    pub fn matrix_dims(self) -> (usize, usize) {
        match self {
            LayerShape::Dense { m, n } => (m, n),
            LayerShape::Conv { k, c_in, c_out } => (k * k * c_in, c_out),
        }
    }

    pub fn outputs(self) -> usize {
        self.matrix_dims().1
    }
}

/// Learnable values one layer contributes under `mode`.
///
/// Biases are not counted: every adaptation mode keeps them frozen. Under
/// `FreezeD` this is the count for an unfrozen layer; frozen layers contribute
/// zero (see `Layer::trainable_count`).
pub fn param_count(mode: AdaptMode, shape: LayerShape) -> usize {
    let (rows, cols) = shape.matrix_dims();
    match mode {
        AdaptMode::Pretrain => 0,
        AdaptMode::Tgan | AdaptMode::FreezeD => rows * cols,
        AdaptMode::Ssgan => match shape {
            LayerShape::Conv { c_out, .. } => 2 * c_out,
            LayerShape::Dense { .. } => 0,
        },
        AdaptMode::Fsgan => rows.min(cols),
    }
}

/// A layer in singular-value form.
#[derive(Clone, Debug, PartialEq)]
pub struct DecomposedLayer {
    pub factors: SvdFactors,
    pub lambda: Vec<f32>,
    pub bias: Vec<f32>,
    pub kind: LayerKind,
    pub original_shape: Vec<usize>,
}

/// Decomposes a rank-2 dense weight or a rank-4 `k x k x c_in x c_out` kernel.
pub fn decompose_layer(
    w0: &Tensor,
    bias: Vec<f32>,
    kind: LayerKind,
) -> Result<DecomposedLayer, ReparamError> {
    let matrix = match (w0.rank(), kind) {
        (2, LayerKind::Dense) => w0.clone(),
        (4, LayerKind::Conv { k, .. }) => {
            if w0.shape()[0] != k || w0.shape()[1] != k {
                return Err(ReparamError::ShapeMismatch(format!(
                    "kernel {:?} does not match k = {k}",
                    w0.shape()
                )));
            }
            flatten_conv(w0)?
        }
        (2 | 4, _) => {
            return Err(ReparamError::ShapeMismatch(format!(
                "rank-{} weight does not match layer kind {kind:?}",
                w0.rank()
            )))
        }
        (r, _) => return Err(ReparamError::UnsupportedRank(r)),
    };
    let (_, c_out) = matrix.dims2()?;
    if bias.len() != c_out {
        return Err(ReparamError::ShapeMismatch(format!(
            "bias has length {}, layer has {c_out} outputs",
            bias.len()
        )));
    }
    let factors = linalg::svd(&matrix)?;
    let lambda = vec![1.0; factors.rank()];
    Ok(DecomposedLayer {
        factors,
        lambda,
        bias,
        kind,
        original_shape: w0.shape().to_vec(),
    })
}

impl DecomposedLayer {
    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    /// `lambda * sigma0`.
    pub fn singular_values(&self) -> Vec<f32> {
        self.lambda
            .iter()
            .zip(&self.factors.sigma0)
            .map(|(l, s)| l * s)
            .collect()
    }

    /// Effective weight as the flattened `(k^2 c_in) x c_out` (or `m x n`) matrix.
    pub fn effective_matrix(&self) -> Tensor {
        reconstruct(&self.factors, &self.singular_values()).expect("lambda length is the rank")
    }

    /// Effective weight in its original (possibly rank-4) shape.
    pub fn effective_weight(&self) -> Tensor {
        let m = self.effective_matrix();
        match self.kind {
            LayerKind::Dense => m,
            LayerKind::Conv { k, .. } => unflatten_conv(&m, k).expect("shape fixed at decomposition"),
        }
    }

    pub fn sigma_gradient(&self, g: &Tensor) -> Result<Vec<f32>, ReparamError> {
        sigma_gradient(g, self)
    }

    pub fn shape(&self) -> LayerShape {
        match self.kind {
            LayerKind::Dense => LayerShape::Dense {
                m: self.factors.rows(),
                n: self.factors.cols(),
            },
            LayerKind::Conv { k, .. } => LayerShape::Conv {
                k,
                c_in: self.factors.rows() / (k * k),
                c_out: self.factors.cols(),
            },
        }
    }
}

/// Chain rule through the reconstruction: `dL/dlambda_i = sigma0_i * u_i^T g v_i`.
///
/// `g` is the loss gradient with respect to the flattened effective weight.
pub fn sigma_gradient(g: &Tensor, layer: &DecomposedLayer) -> Result<Vec<f32>, ReparamError> {
    let (m, n) = (layer.factors.rows(), layer.factors.cols());
    if g.shape() != [m, n] {
        return Err(ReparamError::ShapeMismatch(format!(
            "gradient {:?} vs flattened weight [{m}, {n}]",
            g.shape()
        )));
    }
    Ok(sigma_gradient_raw(g.data(), &layer.factors))
}

/// Unchecked core of [`sigma_gradient`] over a row-major `m x n` slice.
pub(crate) fn sigma_gradient_raw(g: &[f32], factors: &SvdFactors) -> Vec<f32> {
    let (m, n, s) = (factors.rows(), factors.cols(), factors.rank());
    // gv = g V  (m x s), then diag(U^T gv).
    let mut gv = vec![0.0f32; m * s];
    linalg::gemm::sgemm(
        linalg::gemm::MatRef::row_major(g, m, n),
        linalg::gemm::MatRef::row_major(factors.v.data(), n, s),
        &mut gv,
        false,
    );
    let u = factors.u.data();
    (0..s)
        .map(|i| {
            let mut acc = 0.0f64;
            for r in 0..m {
                acc += f64::from(u[r * s + i]) * f64::from(gv[r * s + i]);
            }
            (acc * f64::from(factors.sigma0[i])) as f32
        })
        .collect()
}

/// Frozen-weight convolution followed by a per-output-channel affine map:
/// `conv(x, w0) * gamma + beta`.
pub fn scale_shift_forward(
    x: &Tensor,
    w0: &Tensor,
    gamma: &[f32],
    beta: &[f32],
    pad: Padding,
) -> Result<Tensor, ReparamError> {
    let c_out = *w0.shape().last().unwrap_or(&0);
    if gamma.len() != c_out || beta.len() != c_out {
        return Err(ReparamError::ShapeMismatch(format!(
            "gamma/beta lengths {}/{} vs {c_out} output channels",
            gamma.len(),
            beta.len()
        )));
    }
    let mut y = conv2d(x, w0, pad)?;
    let plane = y.shape()[2] * y.shape()[3];
    for (i, v) in y.data_mut().iter_mut().enumerate() {
        let ch = (i / plane) % c_out;
        *v = *v * gamma[ch] + beta[ch];
    }
    Ok(y)
}
