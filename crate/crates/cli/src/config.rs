use std::path::Path;

use serde::{Deserialize, Serialize};
use svadapt::gan::ArchConfig;
use svadapt::TrainConfig;

use crate::error::{CliError, CliResult};

/// Flat JSON run configuration. Every key is optional; command-line flags
/// override whatever the file sets.
///
/// | key | default | used by |
/// |---|---|---|
/// | `z_dim`, `base_width`, `resolution`, `channels` | 64, 64, 32, 3 | pretrain (adapt: must match the checkpoint) |
/// | `model_seed` | 0 | pretrain initialization |
/// | `domain` | `source` (pretrain), `near` (adapt) | training data preset |
/// | `pool_size` | 2000 | source images (pretrain), split pool (adapt) |
/// | `data_seed` | 1 | domain sampling and split |
/// | `learning_rate` | 0.003 | |
/// | `image_budget` | 20000, or 16000 at n = 5 | |
/// | `batch_size` | 16 | |
/// | `r1_gamma` | 10 | |
/// | `seed` | 0 | batch and latent sampling |
/// | `psi` | 0.8 | sample grids |
/// | `snapshot_interval` | 2000 | images between snapshots; 0 disables |
/// | `freeze_depth` | half the discriminator, rounded up | freezed only |
/// | `grid_samples` | 16 | sample grid size |
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub z_dim: Option<usize>,
    pub base_width: Option<usize>,
    pub resolution: Option<usize>,
    pub channels: Option<usize>,
    pub model_seed: Option<u64>,
    pub domain: Option<String>,
    pub pool_size: Option<usize>,
    pub data_seed: Option<u64>,
    pub learning_rate: Option<f32>,
    pub image_budget: Option<usize>,
    pub batch_size: Option<usize>,
    pub r1_gamma: Option<f32>,
    pub seed: Option<u64>,
    pub psi: Option<f32>,
    pub snapshot_interval: Option<usize>,
    pub freeze_depth: Option<usize>,
    pub grid_samples: Option<usize>,
}

pub const DEFAULT_POOL_SIZE: usize = 2000;
pub const DEFAULT_DATA_SEED: u64 = 1;
pub const DEFAULT_GRID_SAMPLES: usize = 16;

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn arch(&self) -> ArchConfig {
        let d = ArchConfig::default();
        ArchConfig {
            z_dim: self.z_dim.unwrap_or(d.z_dim),
            base_width: self.base_width.unwrap_or(d.base_width),
            resolution: self.resolution.unwrap_or(d.resolution),
            channels: self.channels.unwrap_or(d.channels),
        }
    }

    /// Keys set in the file that disagree with `arch`.
    pub fn arch_conflicts(&self, arch: &ArchConfig) -> Vec<String> {
        [
            ("z_dim", self.z_dim, arch.z_dim),
            ("base_width", self.base_width, arch.base_width),
            ("resolution", self.resolution, arch.resolution),
            ("channels", self.channels, arch.channels),
        ]
        .into_iter()
        .filter_map(|(k, set, have)| match set {
            Some(v) if v != have => Some(format!("{k} = {v} but checkpoint has {have}")),
            _ => None,
        })
        .collect()
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size.unwrap_or(DEFAULT_POOL_SIZE)
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(DEFAULT_DATA_SEED)
    }

    pub fn grid_samples(&self) -> usize {
        self.grid_samples.unwrap_or(DEFAULT_GRID_SAMPLES)
    }

    /// Training settings; `default_budget` applies when no budget is set.
    pub fn train(&self, default_budget: usize, learn_biases: bool) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            image_budget: self.image_budget.unwrap_or(default_budget),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            r1_gamma: self.r1_gamma.unwrap_or(d.r1_gamma),
            seed: self.seed.unwrap_or(d.seed),
            psi: self.psi.unwrap_or(d.psi),
            snapshot_interval: self.snapshot_interval.unwrap_or(d.snapshot_interval),
            learn_biases,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_protocol() {
        let c = RunConfig::default();
        let t = c.train(TrainConfig::default_budget(5), false);
        assert_eq!(t.image_budget, 16_000);
        assert_eq!(t.learning_rate, 0.003);
        assert_eq!(t.psi, 0.8);
        assert_eq!(c.arch(), ArchConfig::default());
    }

    #[test]
    fn rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"learning_rat": 0.1}"#).unwrap();
        assert_eq!(RunConfig::load(Some(&p)).unwrap_err().code, crate::exit::USAGE);
        std::fs::write(&p, r#"{"learning_rate": 0.1, "resolution": 16}"#).unwrap();
        let c = RunConfig::load(Some(&p)).unwrap();
        assert_eq!(c.train(1, false).learning_rate, 0.1);
        assert_eq!(c.arch().resolution, 16);
    }

    #[test]
    fn arch_conflicts_listed() {
        let c = RunConfig {
            resolution: Some(32),
            channels: Some(3),
            ..Default::default()
        };
        let conflicts = c.arch_conflicts(&ArchConfig::desk());
        assert_eq!(conflicts.len(), 1);
        assert!(conflicts[0].starts_with("resolution"));
    }
}
