//! Sequential layer stacks with hand-written reverse mode.
//!
//! Besides the usual forward/backward pair there is a *linearized* forward:
//! the Jacobian-vector product `J_x f(x) v` evaluated with the activation
//! slopes of a cached primal pass. Backpropagating through it with the same
//! routine gives parameter gradients of `v^T grad_x f`, which is what the R1
//! penalty needs. This is exact for piecewise-linear activations, whose second
//! derivative vanishes almost everywhere.

use serde::{Deserialize, Serialize};

use crate::linalg::{nchw_to_rows, ConvGeom, LinalgError, Tensor};
use crate::linalg::gemm::{sgemm, MatRef};
use crate::reparam::{sigma_gradient_raw, LayerKind};

use super::layer::{Layer, LayerParams, Slot};
use super::GanError;

pub const LEAKY_SLOPE: f32 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
        }
    }

    fn slope(self, pre: f32) -> f32 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu => {
                if pre > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(pre);
                s * (1.0 - s)
            }
        }
    }
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Layer plus the fixed plumbing around it:
/// `[upsample] -> layer -> activation -> [reshape] -> [avg-pool]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub layer: Layer,
    pub upsample: bool,
    pub activation: Activation,
    pub reshape: Option<[usize; 3]>,
    pub pool: bool,
}

pub(crate) struct StageCache {
    in_shape: Vec<usize>,
    /// Dense: input rows (`batch x m`). Conv: patch matrix.
    layer_in: Vec<f32>,
    geom: Option<ConvGeom>,
    weight: Vec<f32>,
    /// Scale-shift layers: convolution output before `gamma`.
    pre_affine: Option<Vec<f32>>,
    /// Layer output before the activation, always from the primal pass.
    pre_act: Vec<f32>,
    pre_act_shape: Vec<usize>,
}

impl StageCache {
    /// Shape of the stage output (after reshape and pooling).
    pub(crate) fn output_shape(&self, stage: &Stage) -> Vec<usize> {
        let mut s = self.pre_act_shape.clone();
        if let Some([c, h, w]) = stage.reshape {
            s = vec![s[0], c, h, w];
        }
        if stage.pool {
            let r = s.len();
            s[r - 1] /= 2;
            s[r - 2] /= 2;
        }
        s
    }
}

pub(crate) type NetCache = Vec<StageCache>;

/// Gradients of the trainable slots of one layer.
pub(crate) type LayerGrads = Vec<(Slot, Vec<f32>)>;

#[derive(Clone, Copy, Debug)]
pub(crate) struct BackwardOpts {
    /// Parameter gradients for the trainable slots; `None` skips them.
    pub learn_biases: Option<bool>,
    pub input_grad: bool,
}

/// Forward pass. With `keep` the per-stage cache for [`backward`] is returned.
pub(crate) fn forward(
    stages: &[Stage],
    x: &Tensor,
    keep: bool,
) -> Result<(Tensor, Option<NetCache>), GanError> {
    run(stages, x, keep.then(Vec::new), None)
}

/// Jacobian-vector product `J v` at the point cached in `primal`.
pub(crate) fn linearize(
    stages: &[Stage],
    primal: &NetCache,
    v: &Tensor,
) -> Result<(Tensor, NetCache), GanError> {
    let (out, cache) = run(stages, v, Some(Vec::new()), Some(primal))?;
    Ok((out, cache.expect("cache requested")))
}

fn run(
    stages: &[Stage],
    x: &Tensor,
    mut cache: Option<NetCache>,
    primal: Option<&NetCache>,
) -> Result<(Tensor, Option<NetCache>), GanError> {
    let tangent = primal.is_some();
    let mut h = x.clone();
    for (idx, stage) in stages.iter().enumerate() {
        let in_shape = h.shape().to_vec();
        if stage.upsample {
            h = upsample2x(&h)?;
        }
        let batch = h.shape()[0];
        let layer = &stage.layer;
        let weight = layer.weight_matrix().into_owned();
        let (rows, c_out) = weight.dims2()?;
        let bias = layer.bias();
        let (mut y, y_shape, layer_in, geom, pre_affine) = match layer.kind {
            LayerKind::Dense => {
                let m = h.len() / batch;
                if m != rows {
                    return Err(GanError::Shape(format!(
                        "{}: dense layer expects {rows} inputs, got {m}",
                        layer.name
                    )));
                }
                let mut y = vec![0.0f32; batch * c_out];
                sgemm(
                    MatRef::row_major(h.data(), batch, m),
                    MatRef::row_major(weight.data(), m, c_out),
                    &mut y,
                    false,
                );
                if !tangent {
                    for row in y.chunks_exact_mut(c_out) {
                        row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
                    }
                }
                (y, vec![batch, c_out], h.into_data(), None, None)
            }
            LayerKind::Conv { k, pad } => {
                let c_in = rows / (k * k);
                let geom = ConvGeom::new(h.shape(), k, c_in, pad)
                    .map_err(|e| GanError::Shape(format!("{}: {e}", layer.name)))?;
                let patches = geom.im2col(h.data());
                let mut y = geom.forward(&patches, weight.data(), c_out);
                let plane = geom.h_out * geom.w_out;
                let pre_affine = match &layer.params {
                    LayerParams::ScaleShift { gamma, beta, .. } => {
                        let raw = y.clone();
                        for (i, v) in y.iter_mut().enumerate() {
                            let ch = (i / plane) % c_out;
                            *v = if tangent {
                                *v * gamma[ch]
                            } else {
                                *v * gamma[ch] + bias[ch] + beta[ch]
                            };
                        }
                        Some(raw)
                    }
                    _ => {
                        if !tangent {
                            for (i, v) in y.iter_mut().enumerate() {
                                *v += bias[(i / plane) % c_out];
                            }
                        }
                        None
                    }
                };
                let shape = vec![batch, c_out, geom.h_out, geom.w_out];
                (y, shape, patches, Some(geom), pre_affine)
            }
        };

        let pre_act = match primal {
            Some(p) => {
                let pre = &p[idx].pre_act;
                debug_assert_eq!(pre.len(), y.len());
                for (v, &z) in y.iter_mut().zip(pre) {
                    *v *= stage.activation.slope(z);
                }
                pre.clone()
            }
            None => {
                let pre = if cache.is_some() { y.clone() } else { Vec::new() };
                y.iter_mut().for_each(|v| *v = stage.activation.apply(*v));
                pre
            }
        };

        let mut out = Tensor::new(y_shape.clone(), y)?;
        if let Some([c, hh, ww]) = stage.reshape {
            out = out.reshape([batch, c, hh, ww])?;
        }
        if stage.pool {
            out = avgpool2x(&out)?;
        }
        if let Some(cache) = cache.as_mut() {
            cache.push(StageCache {
                in_shape,
                layer_in,
                geom,
                weight: weight.into_data(),
                pre_affine,
                pre_act,
                pre_act_shape: y_shape,
            });
        }
        h = out;
    }
    Ok((h, cache))
}

/// Reverse pass from `dout` (shaped like the network output).
///
/// For a cache produced by [`linearize`], bias-like slots get zero gradient:
/// the tangent network has no additive terms.
pub(crate) fn backward(
    stages: &[Stage],
    cache: &NetCache,
    dout: &Tensor,
    opts: BackwardOpts,
    tangent: bool,
) -> Result<(Option<Tensor>, Vec<LayerGrads>), GanError> {
    assert_eq!(stages.len(), cache.len());
    let mut grads: Vec<LayerGrads> = vec![Vec::new(); stages.len()];
    let mut d = dout.data().to_vec();
    let mut d_shape = dout.shape().to_vec();
    for (idx, (stage, sc)) in stages.iter().zip(cache).enumerate().rev() {
        if stage.pool {
            d = avgpool2x_backward(&Tensor::new(d_shape.clone(), d)?)?.into_data();
        }
        debug_assert_eq!(d.len(), sc.pre_act.len());
        for (g, &z) in d.iter_mut().zip(&sc.pre_act) {
            *g *= stage.activation.slope(z);
        }

        let layer = &stage.layer;
        let batch = sc.pre_act_shape[0];
        let c_out = sc.pre_act_shape[1];
        let plane = d.len() / (batch * c_out);
        let slots = match opts.learn_biases {
            Some(lb) => layer.trainable_slots(lb),
            None => Vec::new(),
        };

        // Scale-shift: split off gamma/beta gradients, continue with d * gamma.
        let mut d_lin = d;
        if let LayerParams::ScaleShift { gamma, .. } = &layer.params {
            let raw = sc.pre_affine.as_ref().expect("scale-shift cache");
            if slots.contains(&Slot::Gamma) {
                let mut dg = vec![0.0f32; c_out];
                for (i, (&g, &r)) in d_lin.iter().zip(raw).enumerate() {
                    dg[(i / plane) % c_out] += g * r;
                }
                grads[idx].push((Slot::Gamma, dg));
            }
            if slots.contains(&Slot::Beta) {
                grads[idx].push((Slot::Beta, channel_sums(&d_lin, c_out, plane, tangent)));
            }
            for (i, g) in d_lin.iter_mut().enumerate() {
                *g *= gamma[(i / plane) % c_out];
            }
        }
        if slots.contains(&Slot::Bias) {
            grads[idx].push((Slot::Bias, channel_sums(&d_lin, c_out, plane, tangent)));
        }

        let rows_major = match sc.geom {
            Some(_) => nchw_to_rows(&d_lin, batch, c_out, plane),
            None => d_lin,
        };
        let needs_weight_grad = slots.iter().any(|s| matches!(s, Slot::Weight | Slot::Lambda));
        if needs_weight_grad {
            let g = match &sc.geom {
                Some(geom) => geom.kernel_grad(&sc.layer_in, &rows_major, c_out),
                None => {
                    let m = sc.layer_in.len() / batch;
                    let mut g = vec![0.0f32; m * c_out];
                    sgemm(
                        MatRef::row_major(&sc.layer_in, batch, m).t(),
                        MatRef::row_major(&rows_major, batch, c_out),
                        &mut g,
                        false,
                    );
                    g
                }
            };
            match &layer.params {
                LayerParams::Decomposed(dl) => {
                    grads[idx].push((Slot::Lambda, sigma_gradient_raw(&g, &dl.factors)));
                }
                _ => grads[idx].push((Slot::Weight, g)),
            }
        }

        if idx == 0 && !opts.input_grad {
            return Ok((None, grads));
        }
        let dx = match &sc.geom {
            Some(geom) => geom.input_grad(&rows_major, &sc.weight, c_out),
            None => {
                let m = sc.layer_in.len() / batch;
                let mut dx = vec![0.0f32; batch * m];
                sgemm(
                    MatRef::row_major(&rows_major, batch, c_out),
                    MatRef::row_major(&sc.weight, m, c_out).t(),
                    &mut dx,
                    false,
                );
                dx
            }
        };
        let mut dx = Tensor::new(layer_input_shape(sc, stage), dx)?;
        if stage.upsample {
            dx = upsample2x_backward(&dx)?;
        }
        debug_assert_eq!(dx.shape(), &sc.in_shape[..]);
        d_shape = sc.in_shape.clone();
        d = dx.into_data();
    }
    Ok((Some(Tensor::new(d_shape, d)?), grads))
}

fn layer_input_shape(sc: &StageCache, stage: &Stage) -> Vec<usize> {
    match &sc.geom {
        Some(g) => vec![g.batch, g.c_in, g.h, g.w],
        None => {
            let mut s = sc.in_shape.clone();
            if stage.upsample {
                let r = s.len();
                s[r - 1] *= 2;
                s[r - 2] *= 2;
            }
            s
        }
    }
}

fn channel_sums(d: &[f32], c: usize, plane: usize, zero: bool) -> Vec<f32> {
    let mut out = vec![0.0f32; c];
    if !zero {
        for (i, &g) in d.iter().enumerate() {
            out[(i / plane) % c] += g;
        }
    }
    out
}

fn dims4(x: &Tensor) -> Result<[usize; 4], LinalgError> {
    match *x.shape() {
        [b, c, h, w] => Ok([b, c, h, w]),
        _ => Err(LinalgError::Rank {
            expected: 4,
            got: x.rank(),
        }),
    }
}

pub(crate) fn upsample2x(x: &Tensor) -> Result<Tensor, LinalgError> {
    let [b, c, h, w] = dims4(x)?;
    let src = x.data();
    let mut out = vec![0.0f32; b * c * h * w * 4];
    for plane in 0..b * c {
        for i in 0..2 * h {
            for j in 0..2 * w {
                out[(plane * 2 * h + i) * 2 * w + j] = src[(plane * h + i / 2) * w + j / 2];
            }
        }
    }
    Tensor::new([b, c, 2 * h, 2 * w], out)
}

fn upsample2x_backward(d: &Tensor) -> Result<Tensor, LinalgError> {
    let [b, c, h2, w2] = dims4(d)?;
    let (h, w) = (h2 / 2, w2 / 2);
    let src = d.data();
    let mut out = vec![0.0f32; b * c * h * w];
    for plane in 0..b * c {
        for i in 0..h2 {
            for j in 0..w2 {
                out[(plane * h + i / 2) * w + j / 2] += src[(plane * h2 + i) * w2 + j];
            }
        }
    }
    Tensor::new([b, c, h, w], out)
}

pub(crate) fn avgpool2x(x: &Tensor) -> Result<Tensor, LinalgError> {
    let [b, c, h, w] = dims4(x)?;
    let (ho, wo) = (h / 2, w / 2);
    let src = x.data();
    let mut out = vec![0.0f32; b * c * ho * wo];
    for plane in 0..b * c {
        for i in 0..ho {
            for j in 0..wo {
                let at = |di: usize, dj: usize| src[(plane * h + 2 * i + di) * w + 2 * j + dj];
                out[(plane * ho + i) * wo + j] = 0.25 * (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1));
            }
        }
    }
    Tensor::new([b, c, ho, wo], out)
}

fn avgpool2x_backward(d: &Tensor) -> Result<Tensor, LinalgError> {
    let [b, c, ho, wo] = dims4(d)?;
    let (h, w) = (2 * ho, 2 * wo);
    let src = d.data();
    let mut out = vec![0.0f32; b * c * h * w];
    for plane in 0..b * c {
        for i in 0..h {
            for j in 0..w {
                out[(plane * h + i) * w + j] = 0.25 * src[(plane * ho + i / 2) * wo + j / 2];
            }
        }
    }
    Tensor::new([b, c, h, w], out)
}
