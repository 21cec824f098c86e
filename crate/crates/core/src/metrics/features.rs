use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::gan::LEAKY_SLOPE;
use crate::linalg::{conv2d, Padding, Tensor};

use super::MetricsError;

/// Fixed standardization for raw pixels in `[0, 1]`.
pub const PIXEL_MEAN: f32 = 0.5;
pub const PIXEL_STD: f32 = 0.25;
/// Channel widths of the random convolutional extractor.
pub const RANDOM_CONV_WIDTHS: [usize; 3] = [16, 32, 64];
const CHUNK: usize = 128;

/// Feature map used in place of a pretrained perceptual network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureExtractor {
    /// Flattened pixels, standardized with fixed constants.
    RawPixels,
    /// Untrained 3x3 conv stack with fixed seeded weights, global average
    /// pooled to 64 features.
    RandomConv { seed: u64 },
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        FeatureExtractor::RandomConv { seed: 0 }
    }
}

impl fmt::Display for FeatureExtractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureExtractor::RawPixels => f.write_str("raw_pixels"),
            FeatureExtractor::RandomConv { seed } => write!(f, "random_conv:{seed}"),
        }
    }
}

impl FromStr for FeatureExtractor {
    type Err = MetricsError;

    /// `raw_pixels`, `random_conv` (seed 0) or `random_conv:SEED`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "raw_pixels" => Ok(FeatureExtractor::RawPixels),
            None if s == "random_conv" => Ok(FeatureExtractor::RandomConv { seed: 0 }),
            Some(("random_conv", seed)) => seed
                .parse()
                .map(|seed| FeatureExtractor::RandomConv { seed })
                .map_err(|_| MetricsError::Config(format!("bad extractor seed {seed:?}"))),
            _ => Err(MetricsError::Config(format!("unknown feature extractor {s:?}"))),
        }
    }
}

impl FeatureExtractor {
    /// `n x c x h x w` images to an `n x d` feature matrix.
    pub fn extract(&self, images: &Tensor) -> Result<Tensor, MetricsError> {
        let [n, c, h, w] = match *images.shape() {
            [n, c, h, w] => [n, c, h, w],
            _ => {
                return Err(MetricsError::Config(format!(
                    "expected n x c x h x w images, got {:?}",
                    images.shape()
                )))
            }
        };
        match self {
            FeatureExtractor::RawPixels => {
                let d = c * h * w;
                let data = images
                    .data()
                    .iter()
                    .map(|v| (v - PIXEL_MEAN) / PIXEL_STD)
                    .collect();
                Ok(Tensor::new([n, d], data)?)
            }
            FeatureExtractor::RandomConv { seed } => {
                let net = RandomConv::new(*seed, c);
                let per = c * h * w;
                let mut out = Vec::with_capacity(n * net.dim());
                for chunk in images.data().chunks(CHUNK * per) {
                    let b = chunk.len() / per;
                    let x = Tensor::new([b, c, h, w], chunk.to_vec())?;
                    out.extend(net.forward(x)?);
                }
                Ok(Tensor::new([n, net.dim()], out)?)
            }
        }
    }
}

struct RandomConv {
    kernels: Vec<Tensor>,
}

impl RandomConv {
    fn new(seed: u64, channels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c_in = channels;
        let kernels = RANDOM_CONV_WIDTHS
            .iter()
            .map(|&c_out| {
                let std = (2.0 / (9 * c_in) as f32).sqrt();
                let data = (0..9 * c_in * c_out)
                    .map(|_| {
                        let z: f32 = StandardNormal.sample(&mut rng);
                        std * z
                    })
                    .collect::<Vec<f32>>();
                let k = Tensor::new([3, 3, c_in, c_out], data).expect("positive extents");
                c_in = c_out;
                k
            })
            .collect();
        Self { kernels }
    }

    fn dim(&self) -> usize {
        *RANDOM_CONV_WIDTHS.last().expect("non-empty")
    }

    fn forward(&self, x: Tensor) -> Result<Vec<f32>, MetricsError> {
        let mut h = x;
        h.data_mut().iter_mut().for_each(|v| *v = (*v - PIXEL_MEAN) / PIXEL_STD);
        let last = self.kernels.len() - 1;
        for (i, k) in self.kernels.iter().enumerate() {
            h = conv2d(&h, k, Padding::Same)?;
            h.data_mut().iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v *= LEAKY_SLOPE
                }
            });
            if i < last && h.shape()[2] >= 2 && h.shape()[3] >= 2 {
                h = crate::gan::avgpool2x(&h)?;
            }
        }
        let [b, c, hh, ww] = [h.shape()[0], h.shape()[1], h.shape()[2], h.shape()[3]];
        let plane = hh * ww;
        let mut out = Vec::with_capacity(b * c);
        for p in h.data().chunks_exact(plane) {
            let s: f64 = p.iter().map(|&v| f64::from(v)).sum();
            out.push((s / plane as f64) as f32);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_domain, DomainSpec};

    #[test]
    fn names_roundtrip() {
        for e in [FeatureExtractor::RawPixels, FeatureExtractor::RandomConv { seed: 17 }] {
            assert_eq!(e.to_string().parse::<FeatureExtractor>().unwrap(), e);
        }
        assert_eq!(
            "random_conv".parse::<FeatureExtractor>().unwrap(),
            FeatureExtractor::RandomConv { seed: 0 }
        );
        assert!("inception".parse::<FeatureExtractor>().is_err());
    }

    #[test]
    fn shapes_and_determinism() {
        let x = sample_domain(&DomainSpec::source(16, 3), 5, 1).unwrap();
        let raw = FeatureExtractor::RawPixels.extract(&x).unwrap();
        assert_eq!(raw.shape(), &[5, 768]);
        let e = FeatureExtractor::RandomConv { seed: 4 };
        let a = e.extract(&x).unwrap();
        assert_eq!(a.shape(), &[5, 64]);
        assert!(a.bits_eq(&e.extract(&x).unwrap()));
        assert!(!a.bits_eq(&FeatureExtractor::RandomConv { seed: 5 }.extract(&x).unwrap()));
    }

    #[test]
    fn identical_images_identical_rows() {
        let one = sample_domain(&DomainSpec::far(16, 1), 1, 3).unwrap();
        let two = Tensor::new([2, 1, 16, 16], [one.data(), one.data()].concat()).unwrap();
        let f = FeatureExtractor::default().extract(&two).unwrap();
        assert_eq!(&f.data()[..64], &f.data()[64..]);
    }

    #[test]
    fn chunking_is_transparent() {
        let x = sample_domain(&DomainSpec::source(8, 1), CHUNK + 3, 2).unwrap();
        let all = FeatureExtractor::default().extract(&x).unwrap();
        let tail = crate::data::select(&x, &[CHUNK + 1]);
        let one = FeatureExtractor::default().extract(&tail).unwrap();
        assert_eq!(&all.data()[(CHUNK + 1) * 64..(CHUNK + 2) * 64], one.data());
    }
}
