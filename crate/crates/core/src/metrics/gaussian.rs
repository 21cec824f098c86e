use serde::{Deserialize, Serialize};

use crate::linalg::{psd_eig_f64, sqrtm_psd_f64, Tensor, PSD_TOL};

use super::MetricsError;

/// Tolerated negative residue of the Frechet trace term before it is
/// reported as an error instead of being clamped to zero.
pub const TRACE_RESIDUE_TOL: f64 = 1e-4;

/// Mean and unbiased covariance of a feature sample, in f64.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianStats {
    pub mu: Vec<f64>,
    /// Row-major `d x d`.
    pub cov: Vec<f64>,
    pub n: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn cov_at(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.dim() + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.cov_at(i, i)).sum()
    }

    /// Copy with the mean shifted by `delta`.
    pub fn shifted(&self, delta: &[f64]) -> Self {
        Self {
            mu: self.mu.iter().zip(delta).map(|(m, d)| m + d).collect(),
            ..self.clone()
        }
    }
}

/// Fits `n x d` features (rows are samples); the covariance uses `n - 1`.
pub fn fit_gaussian(features: &Tensor) -> Result<GaussianStats, MetricsError> {
    let (n, d) = features.dims2()?;
    fit_rows(features.data(), n, d)
}

pub(crate) fn fit_rows(data: &[f32], n: usize, d: usize) -> Result<GaussianStats, MetricsError> {
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    let mut mu = vec![0.0f64; d];
    for row in data.chunks_exact(d) {
        mu.iter_mut().zip(row).for_each(|(m, &x)| *m += f64::from(x));
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0f64; d * d];
    let mut centered = vec![0.0f64; d];
    for row in data.chunks_exact(d) {
        for ((c, &x), m) in centered.iter_mut().zip(row).zip(&mu) {
            *c = f64::from(x) - m;
        }
        for i in 0..d {
            let ci = centered[i];
            let out = &mut cov[i * d + i..(i + 1) * d];
            for (o, &cj) in out.iter_mut().zip(&centered[i..]) {
                *o += ci * cj;
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Ok(GaussianStats { mu, cov, n })
}

fn check(a: &GaussianStats) -> Result<(), MetricsError> {
    let d = a.dim();
    if a.cov.len() != d * d {
        return Err(MetricsError::DimensionMismatch(format!(
            "covariance has {} entries for dimension {d}",
            a.cov.len()
        )));
    }
    Ok(())
}

/// `|mu_a - mu_b|^2 + Tr(C_a + C_b - 2 sqrt(C_a^(1/2) C_b C_a^(1/2)))`.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64, MetricsError> {
    check(a)?;
    check(b)?;
    let d = a.dim();
    if b.dim() != d {
        return Err(MetricsError::DimensionMismatch(format!(
            "statistics of dimension {d} and {}",
            b.dim()
        )));
    }
    let mean_term: f64 = a.mu.iter().zip(&b.mu).map(|(x, y)| (x - y) * (x - y)).sum();

    let s = sqrtm_psd_f64(&a.cov, d, PSD_TOL)?;
    // Validates C_b as PSD with the same tolerance.
    psd_eig_f64(&b.cov, d, PSD_TOL)?;
    let sb = matmul(&s, &b.cov, d);
    let mut m = matmul(&sb, &s, d);
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (m[i * d + j] + m[j * d + i]);
            m[i * d + j] = v;
            m[j * d + i] = v;
        }
    }
    let (values, _) = psd_eig_f64(&m, d, PSD_TOL)?;
    let cross: f64 = values.iter().map(|v| v.sqrt()).sum();

    let fid = mean_term + a.trace() + b.trace() - 2.0 * cross;
    if fid < -TRACE_RESIDUE_TOL {
        return Err(MetricsError::NegativeResidue(fid));
    }
    Ok(fid.max(0.0))
}

fn matmul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik == 0.0 {
                continue;
            }
            let row = &b[k * d..(k + 1) * d];
            for (o, &bkj) in out[i * d..(i + 1) * d].iter_mut().zip(row) {
                *o += aik * bkj;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn stats1(mu: f64, var: f64) -> GaussianStats {
        GaussianStats {
            mu: vec![mu],
            cov: vec![var],
            n: 2,
        }
    }

    #[test]
    fn two_points() {
        let s = fit_gaussian(&Tensor::new([2, 2], vec![0.0, 0.0, 2.0, 2.0]).unwrap()).unwrap();
        assert_eq!(s.mu, vec![1.0, 1.0]);
        assert_eq!(s.cov, vec![2.0; 4]);
    }

    #[test]
    fn identical_points_and_too_few() {
        let s = fit_gaussian(&Tensor::filled([5, 3], 0.7)).unwrap();
        assert!(s.cov.iter().all(|&c| c == 0.0));
        assert!(matches!(
            fit_gaussian(&Tensor::zeros([1, 3])),
            Err(MetricsError::TooFewSamples(1))
        ));
    }

    #[test]
    fn monte_carlo_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let data: Vec<f32> = (0..n * 4).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = fit_gaussian(&Tensor::new([n, 4], data).unwrap()).unwrap();
        assert!(s.mu.iter().all(|m| m.abs() <= 0.02));
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((s.cov_at(i, j) - target).abs() <= 0.03);
            }
        }
    }

    #[test]
    fn one_dimensional_cases() {
        assert!((frechet_distance(&stats1(0.0, 1.0), &stats1(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((frechet_distance(&stats1(0.0, 1.0), &stats1(0.0, 4.0)).unwrap() - 1.0).abs() < 1e-12);
        let a = stats1(0.3, 2.0);
        assert!(frechet_distance(&a, &a).unwrap() < 1e-12);
    }

    #[test]
    fn rejects_mismatch_and_indefinite() {
        let two = GaussianStats {
            mu: vec![0.0; 2],
            cov: vec![1.0, 0.0, 0.0, 1.0],
            n: 2,
        };
        assert!(matches!(
            frechet_distance(&stats1(0.0, 1.0), &two),
            Err(MetricsError::DimensionMismatch(_))
        ));
        let bad = GaussianStats {
            cov: vec![1.0, 0.0, 0.0, -1.0],
            ..two.clone()
        };
        assert!(frechet_distance(&bad, &two).is_err());
        assert!(frechet_distance(&two, &bad).is_err());
    }
}
