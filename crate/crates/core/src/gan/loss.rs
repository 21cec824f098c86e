use crate::linalg::Tensor;

use super::network::{self, sigmoid, BackwardOpts, LayerGrads, NetCache, Stage};
use super::GanError;

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f32) -> f32 {
    let x = f64::from(x);
    (x.max(0.0) + (-x.abs()).exp().ln_1p()) as f32
}

fn check_logits(what: &str, logits: &[f32]) -> Result<(), GanError> {
    if logits.is_empty() {
        return Err(GanError::Shape(format!("empty {what} logits")));
    }
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(GanError::NonFinite {
            what: format!("{what} logit {} at index {i}", logits[i]),
        });
    }
    Ok(())
}

fn mean_softplus(logits: &[f32], sign: f32) -> f32 {
    let sum: f64 = logits.iter().map(|&v| f64::from(softplus(sign * v))).sum();
    (sum / logits.len() as f64) as f32
}

/// Non-saturating logistic losses `(loss_g, loss_d)`.
pub fn gan_losses(d_real: &[f32], d_fake: &[f32]) -> Result<(f32, f32), GanError> {
    check_logits("real", d_real)?;
    check_logits("fake", d_fake)?;
    let loss_d = mean_softplus(d_real, -1.0) + mean_softplus(d_fake, 1.0);
    let loss_g = mean_softplus(d_fake, -1.0);
    Ok((loss_g, loss_d))
}

/// Derivatives of `loss_d` with respect to each real and fake logit:
/// `-sigmoid(-d_real) / B_real` and `sigmoid(d_fake) / B_fake`.
pub fn logit_gradients(d_real: &[f32], d_fake: &[f32]) -> (Vec<f32>, Vec<f32>) {
    let br = d_real.len() as f32;
    let bf = d_fake.len() as f32;
    (
        d_real.iter().map(|&v| -sigmoid(-v) / br).collect(),
        d_fake.iter().map(|&v| sigmoid(v) / bf).collect(),
    )
}

/// `(gamma / 2) * mean_b |grad_x D(x_b)|^2` over a batch of real images.
pub fn r1_penalty(discriminator: &[Stage], real: &Tensor, gamma: f32) -> Result<f32, GanError> {
    let (_, cache) = network::forward(discriminator, real, true)?;
    let cache = cache.expect("cache requested");
    Ok(r1_terms(discriminator, &cache, gamma, None)?.0)
}

/// R1 value and, with `learn_biases` set, its parameter gradients.
///
/// With `v = grad_x D` held fixed, `d/dtheta sum_b |v_b|^2 / 2` equals the
/// parameter gradient of `sum_b v_b . grad_x D(x_b)`, i.e. of the linearized
/// network evaluated on `v`.
pub(crate) fn r1_terms(
    stages: &[Stage],
    cache: &NetCache,
    gamma: f32,
    learn_biases: Option<bool>,
) -> Result<(f32, Option<Vec<LayerGrads>>), GanError> {
    let ones = output_like(stages, cache, 1.0)?;
    let b = ones.shape()[0];
    let (v, _) = network::backward(
        stages,
        cache,
        &ones,
        BackwardOpts {
            learn_biases: None,
            input_grad: true,
        },
        false,
    )?;
    let v = v.expect("input gradient requested");
    let sq: f64 = v.data().iter().map(|&g| f64::from(g) * f64::from(g)).sum();
    let penalty = (f64::from(gamma) / 2.0 * sq / b as f64) as f32;
    if !penalty.is_finite() {
        return Err(GanError::NonFinite {
            what: "R1 penalty".into(),
        });
    }
    let Some(lb) = learn_biases else {
        return Ok((penalty, None));
    };
    if gamma == 0.0 {
        return Ok((penalty, Some(vec![Vec::new(); stages.len()])));
    }
    let (_, tangent) = network::linearize(stages, cache, &v)?;
    let top = output_like(stages, cache, gamma / b as f32)?;
    let (_, grads) = network::backward(
        stages,
        &tangent,
        &top,
        BackwardOpts {
            learn_biases: Some(lb),
            input_grad: false,
        },
        true,
    )?;
    Ok((penalty, Some(grads)))
}

fn output_like(stages: &[Stage], cache: &NetCache, value: f32) -> Result<Tensor, GanError> {
    let (stage, last) = stages
        .last()
        .zip(cache.last())
        .ok_or_else(|| GanError::Shape("empty network".into()))?;
    Ok(Tensor::filled(last.output_shape(stage), value))
}
