use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::linalg::Tensor;

use super::domain::{sample_domain, DomainSpec};
use super::DataError;

/// Target-set sizes the adaptation protocol covers.
pub const SUPPORTED_NSHOTS: [usize; 7] = [5, 10, 15, 25, 30, 50, 100];

/// `n` training images and the held-out remainder of one domain sample.
#[derive(Clone, Debug, PartialEq)]
pub struct NShotSplit {
    pub train: Tensor,
    pub test: Tensor,
    pub n: usize,
    pub seed: u64,
}

/// Auditable record of a split: how to regenerate it and what it contained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub n: usize,
    pub pool_size: usize,
    pub spec: DomainSpec,
    /// SHA-256 of each image's little-endian f32 bytes.
    pub train_hashes: Vec<String>,
    pub test_hashes: Vec<String>,
}

/// Draws `pool_size` images of `spec` and assigns a uniformly random `n` of
/// them to `train`; the remaining `pool_size - n` form `test`.
pub fn make_nshot(spec: &DomainSpec, n: usize, pool_size: usize, seed: u64) -> Result<NShotSplit, DataError> {
    if !SUPPORTED_NSHOTS.contains(&n) {
        return Err(DataError::UnsupportedShot(n));
    }
    if pool_size <= n {
        return Err(DataError::Split(format!(
            "pool of {pool_size} leaves no held-out images for n = {n}"
        )));
    }
    let pool = sample_domain(spec, pool_size, seed)?;
    let mut order: Vec<usize> = (0..pool_size).collect();
    // Separate stream from the renderer's per-image streams.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5b11);
    order.shuffle(&mut rng);
    let (train_idx, test_idx) = order.split_at(n);
    Ok(NShotSplit {
        train: select(&pool, train_idx),
        test: select(&pool, test_idx),
        n,
        seed,
    })
}

/// Rows `idx` of an `n x ...` tensor, in the given order.
pub fn select(images: &Tensor, idx: &[usize]) -> Tensor {
    let per = images.len() / images.shape()[0];
    let mut data = Vec::with_capacity(idx.len() * per);
    for &i in idx {
        data.extend_from_slice(&images.data()[i * per..(i + 1) * per]);
    }
    let mut shape = images.shape().to_vec();
    shape[0] = idx.len();
    Tensor::new(shape, data).expect("non-empty selection")
}

pub fn image_hashes(images: &Tensor) -> Vec<String> {
    let per = images.len() / images.shape()[0];
    images
        .data()
        .chunks_exact(per)
        .map(|img| {
            let mut h = Sha256::new();
            for v in img {
                h.update(v.to_le_bytes());
            }
            hex::encode(h.finalize())
        })
        .collect()
}

impl SplitManifest {
    pub fn new(spec: &DomainSpec, split: &NShotSplit) -> Self {
        Self {
            seed: split.seed,
            n: split.n,
            pool_size: split.n + split.test.shape()[0],
            spec: spec.clone(),
            train_hashes: image_hashes(&split.train),
            test_hashes: image_hashes(&split.test),
        }
    }

    /// Regenerates the split and checks every recorded hash.
    pub fn regenerate(&self) -> Result<NShotSplit, DataError> {
        let split = make_nshot(&self.spec, self.n, self.pool_size, self.seed)?;
        self.verify(&split)?;
        Ok(split)
    }

    pub fn verify(&self, split: &NShotSplit) -> Result<(), DataError> {
        let check = |what: &str, recorded: &[String], images: &Tensor| {
            let actual = image_hashes(images);
            if recorded.len() != actual.len() {
                return Err(DataError::Integrity(format!(
                    "{what}: manifest lists {} images, split has {}",
                    recorded.len(),
                    actual.len()
                )));
            }
            match recorded.iter().zip(&actual).position(|(a, b)| a != b) {
                Some(i) => Err(DataError::Integrity(format!("{what} image {i} hash mismatch"))),
                None => Ok(()),
            }
        };
        check("train", &self.train_hashes, &split.train)?;
        check("test", &self.test_hashes, &split.test)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
