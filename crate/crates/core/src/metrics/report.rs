use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gan::{sample_seeds, GanModel, TrainConfig};
use crate::linalg::Tensor;

use super::features::FeatureExtractor;
use super::gaussian::{fit_gaussian, frechet_distance};
use super::sharpness::{mean_std, sharpness_batch};
use super::MetricsError;

/// Latents rendered per generator call during evaluation.
const EVAL_CHUNK: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fid: f64,
    pub sharpness_mean: f64,
    pub sharpness_std: f64,
    pub trainable_params: usize,
    pub n_eval: usize,
    pub feature_space: String,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| MetricsError::Io(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Latent seeds, one image each. Sharing this list across methods makes
    /// them consume identical latents.
    pub seeds: Vec<u64>,
    pub psi: f32,
    pub extractor: FeatureExtractor,
}

impl EvalConfig {
    pub const DEFAULT_N_EVAL: usize = 1000;

    /// Seeds `0..n`.
    pub fn with_n(n: usize) -> Self {
        Self {
            seeds: (0..n as u64).collect(),
            ..Self::default()
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seeds: (0..Self::DEFAULT_N_EVAL as u64).collect(),
            psi: TrainConfig::DEFAULT_PSI,
            extractor: FeatureExtractor::default(),
        }
    }
}

/// Renders one image per seed (truncated, clamped), in chunks.
pub fn generate_eval_set(model: &GanModel, seeds: &[u64], psi: f32) -> Result<Tensor, MetricsError> {
    let [c, h, w] = model.arch.image_shape();
    let mut data = Vec::with_capacity(seeds.len() * c * h * w);
    for chunk in seeds.chunks(EVAL_CHUNK) {
        data.extend(sample_seeds(model, chunk, psi)?.into_data());
    }
    Ok(Tensor::new([seeds.len(), c, h, w], data)?)
}

/// Frechet distance between the features of two image sets.
pub fn image_fid(a: &Tensor, b: &Tensor, extractor: FeatureExtractor) -> Result<f64, MetricsError> {
    let fa = fit_gaussian(&extractor.extract(a)?)?;
    let fb = fit_gaussian(&extractor.extract(b)?)?;
    frechet_distance(&fa, &fb)
}

/// Distance between the first and second half of one image set: the noise
/// floor of the metric at that sample size.
pub fn split_half_fid(images: &Tensor, extractor: FeatureExtractor) -> Result<f64, MetricsError> {
    let n = images.shape()[0];
    if n < 4 {
        return Err(MetricsError::TooFewSamples(n));
    }
    let half = n / 2;
    let first: Vec<usize> = (0..half).collect();
    let second: Vec<usize> = (half..2 * half).collect();
    image_fid(
        &crate::data::select(images, &first),
        &crate::data::select(images, &second),
        extractor,
    )
}

/// FID of generated samples against `test_set`, their sharpness, and the
/// model's trainable-parameter count.
pub fn evaluate(model: &GanModel, test_set: &Tensor, cfg: &EvalConfig) -> Result<MetricReport, MetricsError> {
    if test_set.shape().first().copied().unwrap_or(0) < 2 {
        return Err(MetricsError::TooFewSamples(test_set.shape()[0]));
    }
    if cfg.seeds.len() < 2 {
        return Err(MetricsError::TooFewSamples(cfg.seeds.len()));
    }
    let generated = generate_eval_set(model, &cfg.seeds, cfg.psi)?;
    let fid = image_fid(&generated, test_set, cfg.extractor)?;
    let (sharpness_mean, sharpness_std) = mean_std(&sharpness_batch(&generated));
    Ok(MetricReport {
        fid,
        sharpness_mean,
        sharpness_std,
        trainable_params: model.trainable_count(),
        n_eval: cfg.seeds.len(),
        feature_space: cfg.extractor.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_domain, DomainSpec};
    use crate::gan::ArchConfig;
    use crate::reparam::AdaptMode;

    #[test]
    fn report_fields() {
        let arch = ArchConfig::desk();
        let mut m = GanModel::new(arch, 1).unwrap();
        m.set_mode(AdaptMode::Fsgan, None).unwrap();
        let test = sample_domain(&DomainSpec::source(16, 3), 40, 2).unwrap();
        let r = evaluate(&m, &test, &EvalConfig::with_n(30)).unwrap();
        assert_eq!(r.n_eval, 30);
        assert_eq!(r.trainable_params, m.trainable_count());
        assert_eq!(r.feature_space, "random_conv:0");
        assert!(r.fid >= 0.0 && (0.0..=1.0).contains(&r.sharpness_mean));
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["fid", "sharpness_mean", "sharpness_std", "trainable_params", "n_eval", "feature_space"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(evaluate(&m, &test, &EvalConfig::with_n(30)).unwrap(), r);
    }

    #[test]
    fn eval_set_chunking_matches_direct() {
        let m = GanModel::new(ArchConfig::desk(), 1).unwrap();
        let seeds: Vec<u64> = (0..(EVAL_CHUNK as u64 + 5)).collect();
        let all = generate_eval_set(&m, &seeds, 0.8).unwrap();
        let last = sample_seeds(&m, &seeds[EVAL_CHUNK + 2..EVAL_CHUNK + 3], 0.8).unwrap();
        let per = last.len();
        assert_eq!(&all.data()[(EVAL_CHUNK + 2) * per..(EVAL_CHUNK + 3) * per], last.data());
    }

    #[test]
    fn too_few() {
        let m = GanModel::new(ArchConfig::desk(), 1).unwrap();
        let test = sample_domain(&DomainSpec::source(16, 3), 1, 2).unwrap();
        assert!(evaluate(&m, &test, &EvalConfig::with_n(10)).is_err());
    }
}
