//! Procedural image domains.
//!
//! Each image is a stroked shape (rings, filled blobs, or glyph-like line
//! strokes) over a flat background. Images are rendered in normalized
//! coordinates `[-1, 1]^2` with one-pixel anti-aliasing. Image `i` of a
//! sample seeded by `s` uses ChaCha stream `i` of seed `s`, so any prefix or
//! shard of a sample is reproducible on its own.

use std::f32::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Tensor;

use super::DataError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// One elliptical ring.
    Rings,
    /// Two to four filled ellipses.
    Blobs,
    /// Two to four line strokes between jittered lattice points.
    Glyphs,
}

/// Closed interval sampled uniformly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f32,
    pub hi: f32,
}

impl Range {
    pub const fn new(lo: f32, hi: f32) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f32) -> Self {
        Self { lo: v, hi: v }
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> f32 {
        let u: f32 = rng.random();
        self.lo + (self.hi - self.lo) * u
    }

    fn check(self, name: &str, max: f32) -> Result<(), DataError> {
        let ok = self.lo.is_finite()
            && self.hi.is_finite()
            && self.lo <= self.hi
            && self.lo >= 0.0
            && self.hi <= max;
        if ok {
            Ok(())
        } else {
            Err(DataError::InvalidSpec(format!(
                "{name} range [{}, {}] must be ordered within [0, {max}]",
                self.lo, self.hi
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub family: Family,
    /// Stroke width in normalized units (image width = 2).
    pub stroke_width: Range,
    /// Foreground hue; intensity for single-channel images.
    pub hue: Range,
    pub background: Range,
    /// Shape irregularity: ellipse eccentricity, lattice jitter.
    pub distortion: Range,
    pub resolution: usize,
    pub channels: usize,
}

impl DomainSpec {
    /// Source domain used for pretraining: blue-ish rings on a dark ground.
    pub fn source(resolution: usize, channels: usize) -> Self {
        Self {
            family: Family::Rings,
            stroke_width: Range::new(0.12, 0.24),
            hue: Range::new(0.55, 0.68),
            background: Range::new(0.05, 0.2),
            distortion: Range::new(0.0, 0.35),
            resolution,
            channels,
        }
    }

    /// Same family as [`DomainSpec::source`] with the hue shifted.
    pub fn near(resolution: usize, channels: usize) -> Self {
        Self {
            hue: Range::new(0.02, 0.15),
            ..Self::source(resolution, channels)
        }
    }

    /// A different family, palette and ground.
    pub fn far(resolution: usize, channels: usize) -> Self {
        Self {
            family: Family::Glyphs,
            stroke_width: Range::new(0.1, 0.2),
            hue: Range::new(0.25, 0.4),
            background: Range::new(0.6, 0.85),
            distortion: Range::new(0.1, 0.5),
            resolution,
            channels,
        }
    }

    /// Named preset: `source`, `near` or `far`.
    pub fn preset(name: &str, resolution: usize, channels: usize) -> Result<Self, DataError> {
        match name {
            "source" => Ok(Self::source(resolution, channels)),
            "near" => Ok(Self::near(resolution, channels)),
            "far" => Ok(Self::far(resolution, channels)),
            other => Err(DataError::InvalidSpec(format!("unknown domain preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.stroke_width.check("stroke_width", 2.0)?;
        self.hue.check("hue", 1.0)?;
        self.background.check("background", 1.0)?;
        self.distortion.check("distortion", 1.0)?;
        if self.resolution < 4 {
            return Err(DataError::InvalidSpec(format!(
                "resolution {} below 4",
                self.resolution
            )));
        }
        if !matches!(self.channels, 1 | 3) {
            return Err(DataError::InvalidSpec(format!(
                "channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        Ok(())
    }

    pub fn image_shape(&self) -> [usize; 3] {
        [self.channels, self.resolution, self.resolution]
    }
}

/// `n` images as an `n x c x h x w` tensor with values in `[0, 1]`.
pub fn sample_domain(spec: &DomainSpec, n: usize, seed: u64) -> Result<Tensor, DataError> {
    spec.validate()?;
    if n == 0 {
        return Err(DataError::InvalidSpec("sample count must be at least 1".into()));
    }
    let [c, h, w] = spec.image_shape();
    let mut data = Vec::with_capacity(n * c * h * w);
    for i in 0..n {
        data.extend(render(spec, seed, i as u64));
    }
    Ok(Tensor::new([n, c, h, w], data)?)
}

/// Image `index` of the sample seeded by `seed`.
pub fn render(spec: &DomainSpec, seed: u64, index: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let stroke = spec.stroke_width.draw(&mut rng);
    let hue = spec.hue.draw(&mut rng);
    let bg = spec.background.draw(&mut rng);
    let distortion = spec.distortion.draw(&mut rng);
    let shape = Shape::draw(spec.family, stroke, distortion, &mut rng);
    let fg = if spec.channels == 1 {
        vec![hue]
    } else {
        hsv_to_rgb(hue, 0.85, 0.95).to_vec()
    };

    let r = spec.resolution;
    let px = 2.0 / r as f32;
    let mut out = vec![0.0f32; spec.channels * r * r];
    for i in 0..r {
        let y = -1.0 + (i as f32 + 0.5) * px;
        for j in 0..r {
            let x = -1.0 + (j as f32 + 0.5) * px;
            let a = shape.coverage(x, y, px);
            for (ch, &f) in fg.iter().enumerate() {
                out[(ch * r + i) * r + j] = bg * (1.0 - a) + f * a;
            }
        }
    }
    out
}

struct Ellipse {
    cx: f32,
    cy: f32,
    rx: f32,
    ry: f32,
    cos: f32,
    sin: f32,
}

impl Ellipse {
    fn draw(rng: &mut ChaCha8Rng, radius: (f32, f32), center: f32, distortion: f32) -> Self {
        let base = radius.0 + (radius.1 - radius.0) * rng.random::<f32>();
        let ecc = 1.0 + 0.6 * distortion * rng.random_range(-1.0f32..1.0);
        let theta = rng.random_range(0.0..PI);
        Self {
            cx: rng.random_range(-center..=center),
            cy: rng.random_range(-center..=center),
            rx: base * ecc,
            ry: base / ecc,
            cos: theta.cos(),
            sin: theta.sin(),
        }
    }

    /// Approximate signed distance to the boundary (negative inside).
    fn signed_distance(&self, x: f32, y: f32) -> f32 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * self.cos + dy * self.sin) / self.rx;
        let v = (-dx * self.sin + dy * self.cos) / self.ry;
        let rho = (u * u + v * v).sqrt();
        (rho - 1.0) * self.rx.min(self.ry)
    }
}

enum Shape {
    Ring { ellipse: Ellipse, stroke: f32 },
    Blobs(Vec<Ellipse>),
    Strokes { segments: Vec<[f32; 4]>, stroke: f32 },
}

impl Shape {
    fn draw(family: Family, stroke: f32, distortion: f32, rng: &mut ChaCha8Rng) -> Self {
        match family {
            Family::Rings => Shape::Ring {
                ellipse: Ellipse::draw(rng, (0.35, 0.65), 0.2, distortion),
                stroke,
            },
            Family::Blobs => {
                let k = rng.random_range(2..=4);
                Shape::Blobs(
                    (0..k)
                        .map(|_| Ellipse::draw(rng, (stroke, 2.0 * stroke), 0.5, distortion))
                        .collect(),
                )
            }
            Family::Glyphs => {
                let k = rng.random_range(2..=4);
                let point = |rng: &mut ChaCha8Rng| {
                    let gx = rng.random_range(0..3) as f32 - 1.0;
                    let gy = rng.random_range(0..3) as f32 - 1.0;
                    let jitter = 0.25 * distortion;
                    [
                        0.6 * gx + rng.random_range(-1.0f32..=1.0) * jitter,
                        0.6 * gy + rng.random_range(-1.0f32..=1.0) * jitter,
                    ]
                };
                let mut segments = Vec::with_capacity(k);
                let mut from = point(rng);
                for _ in 0..k {
                    let mut to = point(rng);
                    while to == from {
                        to = point(rng);
                    }
                    segments.push([from[0], from[1], to[0], to[1]]);
                    from = to;
                }
                Shape::Strokes { segments, stroke }
            }
        }
    }

    /// Fraction of the pixel at `(x, y)` covered by the foreground.
    fn coverage(&self, x: f32, y: f32, px: f32) -> f32 {
        match self {
            Shape::Ring { ellipse, stroke } => band(ellipse.signed_distance(x, y).abs(), *stroke, px),
            Shape::Blobs(blobs) => blobs
                .iter()
                .filter(|e| e.rx > 0.0 && e.ry > 0.0)
                .map(|e| (0.5 - e.signed_distance(x, y) / px).clamp(0.0, 1.0))
                .fold(0.0, f32::max),
            Shape::Strokes { segments, stroke } => segments
                .iter()
                .map(|s| band(segment_distance(x, y, s), *stroke, px))
                .fold(0.0, f32::max),
        }
    }
}

/// Coverage of a band of width `stroke` at distance `d` from its center line.
fn band(d: f32, stroke: f32, px: f32) -> f32 {
    let edge = ((0.5 * stroke - d) / px + 0.5).clamp(0.0, 1.0);
    edge * (stroke / px).min(1.0)
}

fn segment_distance(x: f32, y: f32, s: &[f32; 4]) -> f32 {
    let (ax, ay, bx, by) = (s[0], s[1], s[2], s[3]);
    let (vx, vy) = (bx - ax, by - ay);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        (((x - ax) * vx + (y - ay) * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (x - ax - t * vx, y - ay - t * vy);
    (dx * dx + dy * dy).sqrt()
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        for spec in [
            DomainSpec::source(16, 3),
            DomainSpec::near(16, 1),
            DomainSpec::far(32, 3),
            DomainSpec {
                family: Family::Blobs,
                ..DomainSpec::source(16, 3)
            },
        ] {
            let a = sample_domain(&spec, 8, 3).unwrap();
            let b = sample_domain(&spec, 8, 3).unwrap();
            assert!(a.bits_eq(&b));
            assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
            let c = sample_domain(&spec, 8, 4).unwrap();
            assert!(!a.bits_eq(&c));
        }
    }

    #[test]
    fn prefix_stable() {
        let spec = DomainSpec::source(8, 3);
        let a = sample_domain(&spec, 3, 9).unwrap();
        let b = sample_domain(&spec, 5, 9).unwrap();
        assert_eq!(a.data(), &b.data()[..a.len()]);
    }

    #[test]
    fn blank_spec_is_constant() {
        let spec = DomainSpec {
            stroke_width: Range::point(0.0),
            background: Range::point(0.3),
            ..DomainSpec::source(16, 3)
        };
        for family in [Family::Rings, Family::Blobs, Family::Glyphs] {
            let s = DomainSpec { family, ..spec.clone() };
            let x = sample_domain(&s, 4, 1).unwrap();
            assert!(x.data().iter().all(|&v| v == 0.3), "{family:?}");
        }
    }

    #[test]
    fn shapes_are_drawn() {
        for spec in [DomainSpec::source(16, 1), DomainSpec::far(16, 1)] {
            let x = sample_domain(&spec, 4, 2).unwrap();
            for img in x.data().chunks(256) {
                let lo = img.iter().cloned().fold(f32::INFINITY, f32::min);
                let hi = img.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                assert!(hi - lo > 0.2);
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = DomainSpec {
            hue: Range::new(0.8, 0.2),
            ..DomainSpec::source(16, 3)
        };
        assert!(sample_domain(&bad, 1, 0).is_err());
        assert!(sample_domain(&DomainSpec::source(16, 2), 1, 0).is_err());
        assert!(sample_domain(&DomainSpec::source(16, 3), 0, 0).is_err());
        assert!(DomainSpec::preset("mid", 16, 3).is_err());
    }

    #[test]
    fn primary_hues() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [1.0, 0.0, 0.0]);
        let g = hsv_to_rgb(1.0 / 3.0, 1.0, 1.0);
        assert!(g[1] == 1.0 && g[0] < 1e-6 && g[2] == 0.0);
    }
}
