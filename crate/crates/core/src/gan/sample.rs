use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Tensor;

use super::layer::LayerParams;
use super::model::GanModel;
use super::GanError;

/// `n` consecutive standard-normal latents from one seeded stream.
pub fn latents(seed: u64, n: usize, z_dim: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * z_dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Tensor::new([n, z_dim], data).expect("positive extents")
}

/// The latent a seed maps to; equals the first row of `latents(seed, n, _)`.
pub fn latent_for_seed(seed: u64, z_dim: usize) -> Vec<f32> {
    latents(seed, 1, z_dim).into_data()
}

/// `mean + psi * (z - mean)`.
pub fn truncate(z: &[f32], psi: f32, latent_mean: &[f32]) -> Vec<f32> {
    z.iter()
        .zip(latent_mean)
        .map(|(&v, &m)| m + psi * (v - m))
        .collect()
}

fn check_psi(psi: f32) -> Result<(), GanError> {
    if (0.0..=1.0).contains(&psi) {
        Ok(())
    } else {
        Err(GanError::Config(format!("psi {psi} outside [0, 1]")))
    }
}

fn render(model: &GanModel, z: Vec<f32>, n: usize) -> Result<Tensor, GanError> {
    let z = Tensor::new([n, model.arch.z_dim], z)?;
    let mut x = model.generate(&z)?;
    x.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(x)
}

fn truncated_rows(model: &GanModel, z: &Tensor, psi: f32) -> Vec<f32> {
    z.data()
        .chunks_exact(model.arch.z_dim)
        .flat_map(|row| truncate(row, psi, &model.latent_mean))
        .collect()
}

/// `n` images from truncated latents drawn from one stream seeded by `seed`.
pub fn sample(model: &GanModel, n: usize, psi: f32, seed: u64) -> Result<Tensor, GanError> {
    if n == 0 {
        return Err(GanError::Config("sample count must be at least 1".into()));
    }
    check_psi(psi)?;
    let z = latents(seed, n, model.arch.z_dim);
    render(model, truncated_rows(model, &z, psi), n)
}

/// One image per seed, each from `latent_for_seed`; the shared-seed protocol
/// used to compare methods on identical latents.
pub fn sample_seeds(model: &GanModel, seeds: &[u64], psi: f32) -> Result<Tensor, GanError> {
    if seeds.is_empty() {
        return Err(GanError::Config("empty seed list".into()));
    }
    check_psi(psi)?;
    let d = model.arch.z_dim;
    let z: Vec<f32> = seeds
        .iter()
        .flat_map(|&s| truncate(&latent_for_seed(s, d), psi, &model.latent_mean))
        .collect();
    render(model, z, seeds.len())
}

/// Frames at `t = 0, 1/(steps-1), ..., 1` of the blend of two truncated latents.
pub fn interpolate(
    model: &GanModel,
    seed_a: u64,
    seed_b: u64,
    steps: usize,
    psi: f32,
) -> Result<Tensor, GanError> {
    if steps < 2 {
        return Err(GanError::Config("interpolation needs at least 2 steps".into()));
    }
    check_psi(psi)?;
    let d = model.arch.z_dim;
    let za = truncate(&latent_for_seed(seed_a, d), psi, &model.latent_mean);
    let zb = truncate(&latent_for_seed(seed_b, d), psi, &model.latent_mean);
    let mut z = Vec::with_capacity(steps * d);
    for i in 0..steps {
        let t = i as f32 / (steps - 1) as f32;
        z.extend(za.iter().zip(&zb).map(|(&a, &b)| (1.0 - t) * a + t * b));
    }
    render(model, z, steps)
}

/// Paired batches from [`explore_svd`].
#[derive(Clone, Debug)]
pub struct Exploration {
    pub original: Tensor,
    pub magnified: Tensor,
}

/// Renders `seeds` before and after scaling one singular value of a
/// decomposed layer by `alpha`. The model is restored before returning.
pub fn explore_svd(
    model: &mut GanModel,
    layer: &str,
    sv_index: usize,
    alpha: f32,
    seeds: &[u64],
    psi: f32,
) -> Result<Exploration, GanError> {
    let target = model
        .layer(layer)
        .ok_or_else(|| GanError::Config(format!("no layer named {layer:?}")))?;
    let LayerParams::Decomposed(d) = &target.params else {
        return Err(GanError::Config(format!("layer {layer} is not decomposed")));
    };
    if sv_index >= d.rank() {
        return Err(GanError::Config(format!(
            "singular value index {sv_index} out of range for rank {}",
            d.rank()
        )));
    }
    let original = sample_seeds(model, seeds, psi)?;
    let saved = *lambda_mut(model, layer, sv_index);
    *lambda_mut(model, layer, sv_index) = saved * alpha;
    let magnified = sample_seeds(model, seeds, psi);
    *lambda_mut(model, layer, sv_index) = saved;
    Ok(Exploration {
        original,
        magnified: magnified?,
    })
}

fn lambda_mut<'a>(model: &'a mut GanModel, layer: &str, i: usize) -> &'a mut f32 {
    match &mut model.layer_mut(layer).expect("layer checked").params {
        LayerParams::Decomposed(d) => &mut d.lambda[i],
        _ => unreachable!("layer checked to be decomposed"),
    }
}
