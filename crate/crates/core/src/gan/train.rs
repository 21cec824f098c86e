use std::collections::HashMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::Tensor;

use super::layer::Slot;
use super::loss::{gan_losses, logit_gradients, r1_terms};
use super::model::GanModel;
use super::network::{self, BackwardOpts, LayerGrads, Stage};
use super::GanError;

pub const ADAM_BETA1: f32 = 0.0;
pub const ADAM_BETA2: f32 = 0.99;
pub const ADAM_EPS: f32 = 1e-8;
/// Consecutive non-finite steps tolerated before training aborts.
pub const DIVERGENCE_PATIENCE: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f32,
    /// Real images shown to the discriminator.
    pub image_budget: usize,
    pub batch_size: usize,
    pub r1_gamma: f32,
    pub seed: u64,
    /// Truncation used when sampling from the trained model.
    pub psi: f32,
    /// Images between snapshots; 0 disables them.
    pub snapshot_interval: usize,
    /// Update biases too. Only meaningful when training from scratch: every
    /// adaptation mode keeps biases frozen.
    pub learn_biases: bool,
}

impl TrainConfig {
    pub const DEFAULT_LEARNING_RATE: f32 = 0.003;
    pub const DEFAULT_IMAGE_BUDGET: usize = 20_000;
    pub const FIVE_SHOT_IMAGE_BUDGET: usize = 16_000;
    /// Longer schedule for the fine-tuned FreezeD variant.
    pub const FREEZED_FT_IMAGE_BUDGET: usize = 60_000;
    pub const DEFAULT_BATCH_SIZE: usize = 16;
    pub const DEFAULT_R1_GAMMA: f32 = 10.0;
    pub const DEFAULT_PSI: f32 = 0.8;
    pub const DEFAULT_SNAPSHOT_INTERVAL: usize = 2_000;

    /// Protocol budget for an `n`-shot target set.
    pub fn default_budget(n_shot: usize) -> usize {
        if n_shot == 5 {
            Self::FIVE_SHOT_IMAGE_BUDGET
        } else {
            Self::DEFAULT_IMAGE_BUDGET
        }
    }

    pub fn for_nshot(n_shot: usize) -> Self {
        Self {
            image_budget: Self::default_budget(n_shot),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |msg: String| Err(GanError::Config(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.r1_gamma.is_finite() && self.r1_gamma >= 0.0) {
            return bad(format!("r1_gamma {} must be non-negative", self.r1_gamma));
        }
        if !(0.0..=1.0).contains(&self.psi) {
            return bad(format!("psi {} outside [0, 1]", self.psi));
        }
        Ok(())
    }

    /// Discriminator steps the budget implies.
    pub fn steps(&self) -> usize {
        self.image_budget.div_ceil(self.batch_size)
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: Self::DEFAULT_LEARNING_RATE,
            image_budget: Self::DEFAULT_IMAGE_BUDGET,
            batch_size: Self::DEFAULT_BATCH_SIZE,
            r1_gamma: Self::DEFAULT_R1_GAMMA,
            seed: 0,
            psi: Self::DEFAULT_PSI,
            snapshot_interval: Self::DEFAULT_SNAPSHOT_INTERVAL,
            learn_biases: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub images_seen: usize,
    pub loss_g: f32,
    pub loss_d: f32,
    pub r1: f32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<StepRecord>,
}

impl History {
    pub const CSV_HEADER: &'static str = "step,images_seen,loss_g,loss_d,r1";

    pub fn images_seen(&self) -> usize {
        self.records.last().map_or(0, |r| r.images_seen)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.step, r.images_seen, r.loss_g, r.loss_d, r.r1
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> io::Result<()> {
        std::fs::write(path, self.to_csv())
    }

    /// Bitwise comparison (NaN-safe).
    pub fn bits_eq(&self, other: &History) -> bool {
        let key = |r: &StepRecord| {
            (r.step, r.images_seen, r.loss_g.to_bits(), r.loss_d.to_bits(), r.r1.to_bits())
        };
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| key(a) == key(b))
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub step: usize,
    pub images_seen: usize,
    pub model: GanModel,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub history: History,
    pub snapshots: Vec<Snapshot>,
    /// Scalars the optimizer actually updated (one per state entry).
    pub trainable_params: usize,
}

#[derive(Default)]
struct Moments {
    t: i32,
    /// Second moments keyed by (stage index, slot). With `beta1 = 0` the
    /// first moment is the current gradient and needs no state.
    v: HashMap<(usize, Slot), Vec<f32>>,
}

impl Moments {
    fn len(&self) -> usize {
        self.v.values().map(Vec::len).sum()
    }

    fn step(&mut self, stages: &mut [Stage], grads: &[LayerGrads], lr: f32) {
        self.t += 1;
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (idx, (stage, lg)) in stages.iter_mut().zip(grads).enumerate() {
            for (slot, g) in lg {
                let v = self
                    .v
                    .entry((idx, *slot))
                    .or_insert_with(|| vec![0.0; g.len()]);
                let p = stage.layer.slot_mut(*slot);
                debug_assert_eq!(p.len(), g.len());
                for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m = g;
                    *p -= lr * m / ((*v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

fn add_grads(into: &mut [LayerGrads], from: &[LayerGrads]) {
    for (a, b) in into.iter_mut().zip(from) {
        if a.is_empty() {
            a.clone_from(b);
            continue;
        }
        for ((sa, ga), (sb, gb)) in a.iter_mut().zip(b) {
            debug_assert_eq!(sa, sb);
            ga.iter_mut().zip(gb).for_each(|(x, y)| *x += y);
        }
    }
}

fn grads_finite(grads: &[LayerGrads]) -> bool {
    grads
        .iter()
        .flatten()
        .all(|(_, g)| g.iter().all(|v| v.is_finite()))
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, z_dim: usize) -> Tensor {
    let data = (0..n * z_dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
    Tensor::new([n, z_dim], data).expect("positive extents")
}

fn gather(data: &Tensor, idx: &[usize]) -> Tensor {
    let per = data.len() / data.shape()[0];
    let mut out = Vec::with_capacity(idx.len() * per);
    for &i in idx {
        out.extend_from_slice(&data.data()[i * per..(i + 1) * per]);
    }
    let mut shape = data.shape().to_vec();
    shape[0] = idx.len();
    Tensor::new(shape, out).expect("gathered rows")
}

struct StepResult {
    record: StepRecord,
    d_grads: Vec<LayerGrads>,
    g_grads: Vec<LayerGrads>,
}

fn step_grads(
    model: &GanModel,
    real: &Tensor,
    z_d: &Tensor,
    z_g: &Tensor,
    cfg: &TrainConfig,
) -> Result<StepResult, GanError> {
    let lb = Some(cfg.learn_biases);
    let params = BackwardOpts {
        learn_biases: lb,
        input_grad: false,
    };

    // Discriminator: logistic loss on real and fake plus R1 at the reals.
    let fake = network::forward(&model.generator, z_d, false)?.0;
    let (d_real, real_cache) = network::forward(&model.discriminator, real, true)?;
    let (d_fake, fake_cache) = network::forward(&model.discriminator, &fake, true)?;
    let (real_cache, fake_cache) = (real_cache.expect("kept"), fake_cache.expect("kept"));
    let (_, loss_d) = gan_losses(d_real.data(), d_fake.data())?;
    let (dr, df) = logit_gradients(d_real.data(), d_fake.data());
    let dr = Tensor::new(d_real.shape().to_vec(), dr)?;
    let df = Tensor::new(d_fake.shape().to_vec(), df)?;
    let (_, mut d_grads) = network::backward(&model.discriminator, &real_cache, &dr, params, false)?;
    let (_, gf) = network::backward(&model.discriminator, &fake_cache, &df, params, false)?;
    add_grads(&mut d_grads, &gf);
    let (r1, r1_grads) = r1_terms(&model.discriminator, &real_cache, cfg.r1_gamma, lb)?;
    add_grads(&mut d_grads, &r1_grads.expect("gradients requested"));

    // Generator: non-saturating loss through the pre-update discriminator.
    let (fake, g_cache) = network::forward(&model.generator, z_g, true)?;
    let (d_fake, fake_cache) = network::forward(&model.discriminator, &fake, true)?;
    let (loss_g, _) = gan_losses(d_real.data(), d_fake.data())?;
    let b = d_fake.len() as f32;
    let dg: Vec<f32> = d_fake
        .data()
        .iter()
        .map(|&v| -super::network::sigmoid(-v) / b)
        .collect();
    let dg = Tensor::new(d_fake.shape().to_vec(), dg)?;
    let (dx, _) = network::backward(
        &model.discriminator,
        &fake_cache.expect("kept"),
        &dg,
        BackwardOpts {
            learn_biases: None,
            input_grad: true,
        },
        false,
    )?;
    let (_, g_grads) = network::backward(
        &model.generator,
        &g_cache.expect("kept"),
        &dx.expect("input gradient requested"),
        params,
        false,
    )?;

    Ok(StepResult {
        record: StepRecord {
            step: 0,
            images_seen: 0,
            loss_g,
            loss_d,
            r1,
        },
        d_grads,
        g_grads,
    })
}

/// Fixed-budget adversarial training. Runs `ceil(image_budget / batch_size)`
/// discriminator steps, each followed by one generator step; the final batch
/// is shortened so exactly `image_budget` real images are consumed. Real
/// batches are drawn uniformly with replacement from `data`.
///
/// Steps whose losses or gradients are non-finite are recorded but not
/// applied; [`DIVERGENCE_PATIENCE`] of them in a row abort training.
pub fn train(model: &mut GanModel, data: &Tensor, cfg: &TrainConfig) -> Result<TrainOutput, GanError> {
    cfg.validate()?;
    model.check_images(data)?;
    let n_data = data.shape()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut d_opt = Moments::default();
    let mut g_opt = Moments::default();
    let mut history = History::default();
    let mut snapshots = Vec::new();
    let mut seen = 0usize;
    let mut bad_streak = 0usize;
    let z_dim = model.arch.z_dim;

    for step in 0..cfg.steps() {
        let batch = cfg.batch_size.min(cfg.image_budget - seen);
        let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n_data)).collect();
        let real = gather(data, &idx);
        let z_d = gaussian(&mut rng, batch, z_dim);
        let z_g = gaussian(&mut rng, batch, z_dim);
        seen += batch;

        let outcome = step_grads(model, &real, &z_d, &z_g, cfg);
        let record = match outcome {
            Ok(res) if grads_finite(&res.d_grads) && grads_finite(&res.g_grads) => {
                d_opt.step(&mut model.discriminator, &res.d_grads, cfg.learning_rate);
                g_opt.step(&mut model.generator, &res.g_grads, cfg.learning_rate);
                bad_streak = 0;
                res.record
            }
            Ok(res) => {
                bad_streak += 1;
                res.record
            }
            Err(GanError::NonFinite { .. }) => {
                bad_streak += 1;
                StepRecord {
                    step,
                    images_seen: seen,
                    loss_g: f32::NAN,
                    loss_d: f32::NAN,
                    r1: f32::NAN,
                }
            }
            Err(e) => return Err(e),
        };
        history.records.push(StepRecord {
            step,
            images_seen: seen,
            ..record
        });
        if bad_streak >= DIVERGENCE_PATIENCE {
            return Err(GanError::Diverged {
                step,
                patience: DIVERGENCE_PATIENCE,
                history: Box::new(history),
            });
        }
        let interval = cfg.snapshot_interval;
        if interval > 0 && seen / interval > (seen - batch) / interval {
            snapshots.push(Snapshot {
                step,
                images_seen: seen,
                model: model.clone(),
            });
        }
    }

    let trainable_params = if history.records.is_empty() {
        model.enumerate_trainable(cfg.learn_biases)
    } else {
        d_opt.len() + g_opt.len()
    };
    Ok(TrainOutput {
        history,
        snapshots,
        trainable_params,
    })
}
