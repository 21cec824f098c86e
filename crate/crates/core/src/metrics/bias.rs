//! Monte-Carlo study of the memorization bias of held-out Frechet distance.
//!
//! A "memorizer" generator replays an `n`-shot set drawn from the held-out
//! pool. Its sample mean and covariance are unbiased estimates of the pool's,
//! so its distance to the pool shrinks as `n` grows even though it produces
//! nothing new. A "diverse reference" samples the true distribution afresh
//! but with every feature's mean offset by `delta` of that feature's pool
//! standard deviation; for large enough `delta` it scores worse than a
//! 10-shot memorizer.

use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_domain, DomainSpec};

use super::features::FeatureExtractor;
use super::gaussian::{fit_gaussian, fit_rows, frechet_distance, GaussianStats};
use super::MetricsError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FidBiasConfig {
    pub nshots: Vec<usize>,
    pub repeats: usize,
    /// Held-out images the distances are measured against.
    pub pool_size: usize,
    /// Samples drawn (with replacement) from the memorized set.
    pub draws: usize,
    /// Fresh samples for the diverse reference.
    pub reference_size: usize,
    /// Reference mean shift, in units of the pool's RMS feature deviation
    /// `sqrt(Tr(C) / d)`.
    pub delta: f64,
    pub extractor: FeatureExtractor,
    pub seed: u64,
}

impl Default for FidBiasConfig {
    fn default() -> Self {
        Self {
            nshots: vec![10, 30, 100],
            repeats: 50,
            pool_size: 2000,
            draws: 1000,
            reference_size: 1000,
            delta: 1.0,
            extractor: FeatureExtractor::default(),
            seed: 0,
        }
    }
}

impl FidBiasConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let bad = |m: String| Err(MetricsError::Config(m));
        if self.repeats < 1 {
            return bad("repeats must be at least 1".into());
        }
        if self.nshots.is_empty() {
            return bad("no n-shot values".into());
        }
        if let Some(&n) = self.nshots.iter().find(|&&n| n < 2 || n > self.pool_size) {
            return bad(format!("n-shot value {n} outside [2, pool_size = {}]", self.pool_size));
        }
        if self.draws < 2 || self.reference_size < 2 {
            return bad("draws and reference_size must be at least 2".into());
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return bad(format!("delta {} must be non-negative", self.delta));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidBiasRow {
    pub n: usize,
    pub fid_memorizer_mean: f64,
    pub fid_memorizer_se: f64,
    pub fid_reference_mean: f64,
    pub fid_reference_se: f64,
}

/// Per-repeat distances behind a [`FidBiasRow`] table.
#[derive(Clone, Debug, PartialEq)]
pub struct FidBiasRuns {
    /// `memorizer[i][r]`: n-shot value `i`, repeat `r`.
    pub memorizer: Vec<Vec<f64>>,
    /// Reference statistics per repeat, before the shift is applied.
    pub reference_unshifted: Vec<GaussianStats>,
    pub pool: GaussianStats,
}

pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs the memorizer and reference for every repeat.
pub fn fid_bias_runs(spec: &DomainSpec, cfg: &FidBiasConfig) -> Result<FidBiasRuns, MetricsError> {
    cfg.validate()?;
    let pool_images = sample_domain(spec, cfg.pool_size, cfg.seed)?;
    let features = cfg.extractor.extract(&pool_images)?;
    let d = features.shape()[1];
    let pool = fit_gaussian(&features)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xb1a5);
    let mut memorizer = vec![Vec::with_capacity(cfg.repeats); cfg.nshots.len()];
    let mut reference_unshifted = Vec::with_capacity(cfg.repeats);
    let mut rows = vec![0.0f32; cfg.draws * d];
    for r in 0..cfg.repeats {
        for (i, &n) in cfg.nshots.iter().enumerate() {
            let shot = index::sample(&mut rng, cfg.pool_size, n).into_vec();
            for k in 0..cfg.draws {
                let src = shot[rng.random_range(0..n)];
                rows[k * d..(k + 1) * d].copy_from_slice(&features.data()[src * d..(src + 1) * d]);
            }
            let stats = fit_rows(&rows, cfg.draws, d)?;
            memorizer[i].push(frechet_distance(&stats, &pool)?);
        }
        let fresh_seed = cfg.seed.wrapping_add(1 + r as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let fresh = sample_domain(spec, cfg.reference_size, fresh_seed)?;
        reference_unshifted.push(fit_gaussian(&cfg.extractor.extract(&fresh)?)?);
    }
    Ok(FidBiasRuns {
        memorizer,
        reference_unshifted,
        pool,
    })
}

impl FidBiasRuns {
    /// Reference distances with feature `i` shifted by `delta * std_i`.
    pub fn reference_fids(&self, delta: f64) -> Result<Vec<f64>, MetricsError> {
        let shift: Vec<f64> = (0..self.pool.dim())
            .map(|i| delta * self.pool.cov_at(i, i).sqrt())
            .collect();
        self.reference_unshifted
            .iter()
            .map(|s| frechet_distance(&s.shifted(&shift), &self.pool))
            .collect()
    }

    pub fn table(&self, nshots: &[usize], delta: f64) -> Result<Vec<FidBiasRow>, MetricsError> {
        let (ref_mean, ref_se) = mean_se(&self.reference_fids(delta)?);
        Ok(nshots
            .iter()
            .zip(&self.memorizer)
            .map(|(&n, fids)| {
                let (m, se) = mean_se(fids);
                FidBiasRow {
                    n,
                    fid_memorizer_mean: m,
                    fid_memorizer_se: se,
                    fid_reference_mean: ref_mean,
                    fid_reference_se: ref_se,
                }
            })
            .collect())
    }
}

/// One table row per n-shot value, averaged over repeats.
pub fn fid_bias_experiment(spec: &DomainSpec, cfg: &FidBiasConfig) -> Result<Vec<FidBiasRow>, MetricsError> {
    fid_bias_runs(spec, cfg)?.table(&cfg.nshots, cfg.delta)
}

/// Whether memorizer means strictly decrease as `n` increases.
pub fn memorizer_decays(rows: &[FidBiasRow]) -> bool {
    let mut sorted: Vec<&FidBiasRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.n);
    sorted
        .windows(2)
        .all(|w| w[0].fid_memorizer_mean > w[1].fid_memorizer_mean)
}

pub const FID_BIAS_CSV_HEADER: &str =
    "n,fid_memorizer_mean,fid_memorizer_se,fid_reference_mean,fid_reference_se";

pub fn fid_bias_csv(rows: &[FidBiasRow]) -> String {
    let mut out = format!("{FID_BIAS_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.n, r.fid_memorizer_mean, r.fid_memorizer_se, r.fid_reference_mean, r.fid_reference_se
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (DomainSpec, FidBiasConfig) {
        (
            DomainSpec::far(8, 1),
            FidBiasConfig {
                nshots: vec![10, 40],
                repeats: 6,
                pool_size: 300,
                draws: 300,
                reference_size: 200,
                ..FidBiasConfig::default()
            },
        )
    }

    #[test]
    fn rows_and_decay() {
        let (spec, cfg) = small();
        let rows = fid_bias_experiment(&spec, &cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(memorizer_decays(&rows));
        let csv = fid_bias_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv, fid_bias_csv(&fid_bias_experiment(&spec, &cfg).unwrap()));
    }

    #[test]
    fn full_pool_memorizer_is_near_zero() {
        let (spec, mut cfg) = small();
        cfg.nshots = vec![cfg.pool_size];
        cfg.draws = 20_000;
        cfg.repeats = 2;
        let runs = fid_bias_runs(&spec, &cfg).unwrap();
        let typical = runs.pool.trace();
        assert!(runs.memorizer[0].iter().all(|&f| f < 0.02 * typical));
    }

    #[test]
    fn shift_raises_reference() {
        let (spec, cfg) = small();
        let runs = fid_bias_runs(&spec, &cfg).unwrap();
        let (a, _) = mean_se(&runs.reference_fids(0.0).unwrap());
        let (b, _) = mean_se(&runs.reference_fids(2.0).unwrap());
        assert!(b > a);
    }

    #[test]
    fn invalid_configs() {
        let (spec, cfg) = small();
        for bad in [
            FidBiasConfig { repeats: 0, ..cfg.clone() },
            FidBiasConfig { nshots: vec![1], ..cfg.clone() },
            FidBiasConfig { nshots: vec![], ..cfg.clone() },
            FidBiasConfig { delta: -1.0, ..cfg.clone() },
        ] {
            assert!(matches!(fid_bias_experiment(&spec, &bad), Err(MetricsError::Config(_))));
        }
    }
}
