use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{Padding, Tensor};
use crate::reparam::{AdaptMode, LayerKind};

use super::layer::Layer;
use super::network::{self, Activation, Stage};
use super::sample::latents;
use super::GanError;

/// Latents averaged to estimate the truncation center.
pub const LATENT_MEAN_SAMPLES: usize = 10_000;

/// Toy architecture hyperparameters.
///
/// Generator: `dense(z -> 4*4*f)`, then per resolution doubling a nearest
/// upsample and a 3x3 conv, then a 1x1 conv to image channels with a sigmoid.
/// Discriminator mirrors it: 1x1 conv from image channels, per halving a 3x3
/// conv and 2x2 average pool, then `dense(4*4*f -> f)` and `dense(f -> 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchConfig {
    pub z_dim: usize,
    pub base_width: usize,
    pub resolution: usize,
    pub channels: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            z_dim: 64,
            base_width: 64,
            resolution: 32,
            channels: 3,
        }
    }
}

impl ArchConfig {
    /// A reduced model for quick single-core experiments and tests.
    pub fn desk() -> Self {
        Self {
            z_dim: 32,
            base_width: 16,
            resolution: 16,
            channels: 3,
        }
    }

    /// Number of resolution doublings from 4x4.
    pub fn stages(&self) -> Result<usize, GanError> {
        let r = self.resolution;
        if r < 8 || !r.is_multiple_of(4) || !(r / 4).is_power_of_two() {
            return Err(GanError::Config(format!(
                "resolution {r} must be 4 * 2^k with k >= 1"
            )));
        }
        if self.z_dim == 0 || self.base_width == 0 || self.channels == 0 {
            return Err(GanError::Config("architecture extents must be positive".into()));
        }
        Ok((r / 4).trailing_zeros() as usize)
    }

    pub fn image_shape(&self) -> [usize; 3] {
        [self.channels, self.resolution, self.resolution]
    }
}

/// Which half of the GAN a layer belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Net {
    Generator,
    Discriminator,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanModel {
    pub arch: ArchConfig,
    pub generator: Vec<Stage>,
    pub discriminator: Vec<Stage>,
    /// Center used by the truncation trick.
    pub latent_mean: Vec<f32>,
}

fn stage(layer: Layer, upsample: bool, activation: Activation) -> Stage {
    Stage {
        layer,
        upsample,
        activation,
        reshape: None,
        pool: false,
    }
}

impl GanModel {
    /// Freshly initialized model (He-normal weights, zero biases), every layer
    /// fully learnable.
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self, GanError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self::skeleton(arch)?;
        let last_g = model.generator.len() - 1;
        let last_d = model.discriminator.len() - 1;
        let stages = model
            .generator
            .iter_mut()
            .enumerate()
            .map(|(i, s)| (s, i == last_g))
            .chain(
                model
                    .discriminator
                    .iter_mut()
                    .enumerate()
                    .map(|(i, s)| (s, i == last_d)),
            );
        for (stage, is_last) in stages {
            let fan_in = stage.layer.shape().matrix_dims().0 as f32;
            let gain = if is_last { 1.0 } else { 2.0 };
            let std = (gain / fan_in).sqrt();
            let w = stage.layer.slot_mut(super::layer::Slot::Weight);
            for v in w.iter_mut() {
                let n: f32 = StandardNormal.sample(&mut rng);
                *v = n * std;
            }
        }
        model.latent_mean = latent_mean(arch.z_dim, seed);
        Ok(model)
    }

    /// Architecture with zero weights; the shape template for loading.
    pub fn skeleton(arch: ArchConfig) -> Result<Self, GanError> {
        let n = arch.stages()?;
        let f = arch.base_width;
        let c = arch.channels;
        let conv3 = LayerKind::Conv {
            k: 3,
            pad: Padding::Same,
        };
        let conv1 = LayerKind::Conv {
            k: 1,
            pad: Padding::Same,
        };
        let zeros = |shape: &[usize]| Tensor::zeros(shape.to_vec());

        let mut generator = Vec::new();
        let mut fc = stage(
            Layer::new("g.fc", LayerKind::Dense, zeros(&[arch.z_dim, 16 * f]), vec![0.0; 16 * f]),
            false,
            Activation::LeakyRelu,
        );
        fc.reshape = Some([f, 4, 4]);
        generator.push(fc);
        for i in 0..n {
            generator.push(stage(
                Layer::new(format!("g.conv{i}"), conv3, zeros(&[3, 3, f, f]), vec![0.0; f]),
                true,
                Activation::LeakyRelu,
            ));
        }
        generator.push(stage(
            Layer::new("g.to_img", conv1, zeros(&[1, 1, f, c]), vec![0.0; c]),
            false,
            Activation::Sigmoid,
        ));

        let mut discriminator = vec![stage(
            Layer::new("d.from_img", conv1, zeros(&[1, 1, c, f]), vec![0.0; f]),
            false,
            Activation::LeakyRelu,
        )];
        for i in 0..n {
            let mut s = stage(
                Layer::new(format!("d.conv{i}"), conv3, zeros(&[3, 3, f, f]), vec![0.0; f]),
                false,
                Activation::LeakyRelu,
            );
            s.pool = true;
            discriminator.push(s);
        }
        discriminator.push(stage(
            Layer::new("d.fc", LayerKind::Dense, zeros(&[16 * f, f]), vec![0.0; f]),
            false,
            Activation::LeakyRelu,
        ));
        discriminator.push(stage(
            Layer::new("d.out", LayerKind::Dense, zeros(&[f, 1]), vec![0.0; 1]),
            false,
            Activation::Identity,
        ));

        Ok(Self {
            arch,
            generator,
            discriminator,
            latent_mean: vec![0.0; arch.z_dim],
        })
    }

    /// Default FreezeD split: the lowest `ceil(L_D / 2)` discriminator layers.
    pub fn default_freeze_depth(&self) -> usize {
        self.discriminator.len().div_ceil(2)
    }

    /// Reparameterizes every layer for `mode`. Under `FreezeD` the lowest
    /// `freeze_depth` discriminator layers (default: half, rounded up) are frozen.
    pub fn set_mode(&mut self, mode: AdaptMode, freeze_depth: Option<usize>) -> Result<(), GanError> {
        let depth = match mode {
            AdaptMode::FreezeD => freeze_depth.unwrap_or_else(|| self.default_freeze_depth()),
            _ => 0,
        };
        if depth > self.discriminator.len() {
            return Err(GanError::Config(format!(
                "freeze depth {depth} exceeds {} discriminator layers",
                self.discriminator.len()
            )));
        }
        for s in &mut self.generator {
            s.layer.set_mode(mode, false)?;
        }
        for (i, s) in self.discriminator.iter_mut().enumerate() {
            s.layer.set_mode(mode, i < depth)?;
        }
        Ok(())
    }

    /// The shared mode, if every layer carries the same one.
    pub fn mode(&self) -> Option<AdaptMode> {
        let mut modes = self.layers().map(|(_, l)| l.mode);
        let first = modes.next()?;
        modes.all(|m| m == first).then_some(first)
    }

    pub fn layers(&self) -> impl Iterator<Item = (Net, &Layer)> {
        self.generator
            .iter()
            .map(|s| (Net::Generator, &s.layer))
            .chain(self.discriminator.iter().map(|s| (Net::Discriminator, &s.layer)))
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers().map(|(_, l)| l).find(|l| l.name == name)
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut Layer> {
        self.generator
            .iter_mut()
            .chain(self.discriminator.iter_mut())
            .map(|s| &mut s.layer)
            .find(|l| l.name == name)
    }

    /// Sum of per-layer parameter counts for the active modes.
    pub fn trainable_count(&self) -> usize {
        self.layers().map(|(_, l)| l.trainable_count()).sum()
    }

    /// Counts learnable scalars by walking the optimizer's slots.
    pub fn enumerate_trainable(&self, learn_biases: bool) -> usize {
        self.layers()
            .map(|(_, l)| {
                l.trainable_slots(learn_biases)
                    .into_iter()
                    .map(|s| l.slot(s).len())
                    .sum::<usize>()
            })
            .sum()
    }

    /// Raw generator output for a `batch x z_dim` latent matrix.
    pub fn generate(&self, z: &Tensor) -> Result<Tensor, GanError> {
        self.check_latents(z)?;
        Ok(network::forward(&self.generator, z, false)?.0)
    }

    /// Discriminator logits, one per image.
    pub fn discriminate(&self, images: &Tensor) -> Result<Vec<f32>, GanError> {
        self.check_images(images)?;
        Ok(network::forward(&self.discriminator, images, false)?.0.into_data())
    }

    pub(crate) fn check_latents(&self, z: &Tensor) -> Result<(), GanError> {
        match z.shape() {
            [_, d] if *d == self.arch.z_dim => Ok(()),
            s => Err(GanError::Shape(format!(
                "latents {s:?}, expected [batch, {}]",
                self.arch.z_dim
            ))),
        }
    }

    pub(crate) fn check_images(&self, x: &Tensor) -> Result<(), GanError> {
        let [c, h, w] = self.arch.image_shape();
        match *x.shape() {
            [_, xc, xh, xw] if (xc, xh, xw) == (c, h, w) => Ok(()),
            _ => Err(GanError::Shape(format!(
                "images {:?}, expected [batch, {c}, {h}, {w}]",
                x.shape()
            ))),
        }
    }
}

fn latent_mean(z_dim: usize, seed: u64) -> Vec<f32> {
    let z = latents(seed, LATENT_MEAN_SAMPLES, z_dim);
    let mut acc = vec![0.0f64; z_dim];
    for row in z.data().chunks_exact(z_dim) {
        acc.iter_mut().zip(row).for_each(|(a, &v)| *a += f64::from(v));
    }
    acc.iter()
        .map(|a| (a / LATENT_MEAN_SAMPLES as f64) as f32)
        .collect()
}
