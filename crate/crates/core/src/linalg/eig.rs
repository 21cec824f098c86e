//! Symmetric eigendecomposition (cyclic two-sided Jacobi) and the PSD matrix
//! square root built on it.

use super::{LinalgError, Tensor};

const MAX_SWEEPS: usize = 100;
/// Allowed asymmetry, relative to the largest entry.
pub const SYMMETRY_TOL: f64 = 1e-6;
/// Eigenvalues down to `-PSD_TOL * max eigenvalue` are clamped to zero.
pub const PSD_TOL: f64 = 1e-8;

/// PSD tolerance for a `d x d` matrix whose entries were rounded to `f32`.
pub fn f32_psd_tol(d: usize) -> f64 {
    PSD_TOL.max(d as f64 * f64::from(f32::EPSILON))
}

/// Eigenvalues in descending order plus the matching orthonormal eigenvectors
/// (as columns of `vectors`).
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: Vec<f32>,
    pub vectors: Tensor,
}

pub fn sym_eig(c: &Tensor) -> Result<SymEig, LinalgError> {
    let d = square_dim(c)?;
    let a: Vec<f64> = c.data().iter().map(|&x| f64::from(x)).collect();
    let (values, vectors) = sym_eig_f64(&a, d)?;
    Ok(SymEig {
        values: values.iter().map(|&x| x as f32).collect(),
        vectors: Tensor::new([d, d], vectors.iter().map(|&x| x as f32).collect())?,
    })
}

/// Principal square root; negative eigenvalues within [`f32_psd_tol`] are
/// treated as round-off and clamped.
pub fn sqrtm_psd(c: &Tensor) -> Result<Tensor, LinalgError> {
    let d = square_dim(c)?;
    let a: Vec<f64> = c.data().iter().map(|&x| f64::from(x)).collect();
    let r = sqrtm_psd_f64(&a, d, f32_psd_tol(d))?;
    Tensor::new([d, d], r.iter().map(|&x| x as f32).collect())
}

fn square_dim(c: &Tensor) -> Result<usize, LinalgError> {
    let (m, n) = c.dims2()?;
    if m != n {
        return Err(LinalgError::ShapeMismatch(format!("expected square matrix, got {m}x{n}")));
    }
    c.ensure_finite()?;
    Ok(m)
}

/// Row-major `d x d` input. Returns descending eigenvalues and row-major
/// eigenvectors stored as columns.
pub(crate) fn sym_eig_f64(c: &[f64], d: usize) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
    assert_eq!(c.len(), d * d);
    let max_abs = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut asym = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            asym = asym.max((c[i * d + j] - c[j * d + i]).abs());
        }
    }
    if asym > SYMMETRY_TOL * max_abs {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }

    let mut a = vec![0.0f64; d * d];
    for i in 0..d {
        for j in 0..d {
            a[i * d + j] = 0.5 * (c[i * d + j] + c[j * d + i]);
        }
    }
    let mut q = vec![0.0f64; d * d];
    for i in 0..d {
        q[i * d + i] = 1.0;
    }

    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..d {
            for r in (p + 1)..d {
                let apr = a[p * d + r];
                let (app, arr) = (a[p * d + p], a[r * d + r]);
                if apr.abs() <= 1e-18 * frob || apr.abs() <= 1e-15 * (app.abs() * arr.abs()).sqrt() {
                    continue;
                }
                rotated = true;
                let theta = (arr - app) / (2.0 * apr);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- J^T A J on rows/cols p, r.
                for k in 0..d {
                    let (akp, akr) = (a[k * d + p], a[k * d + r]);
                    a[k * d + p] = c * akp - s * akr;
                    a[k * d + r] = s * akp + c * akr;
                }
                for k in 0..d {
                    let (apk, ark) = (a[p * d + k], a[r * d + k]);
                    a[p * d + k] = c * apk - s * ark;
                    a[r * d + k] = s * apk + c * ark;
                }
                a[p * d + r] = 0.0;
                a[r * d + p] = 0.0;
                for k in 0..d {
                    let (qkp, qkr) = (q[k * d + p], q[k * d + r]);
                    q[k * d + p] = c * qkp - s * qkr;
                    q[k * d + r] = s * qkp + c * qkr;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| a[y * d + y].partial_cmp(&a[x * d + x]).unwrap());
    let values: Vec<f64> = order.iter().map(|&k| a[k * d + k]).collect();
    let mut vectors = vec![0.0f64; d * d];
    for (dst, &src) in order.iter().enumerate() {
        let mut best = 0;
        for r in 1..d {
            if q[r * d + src].abs() > q[best * d + src].abs() {
                best = r;
            }
        }
        let sign = if q[best * d + src] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            vectors[r * d + dst] = sign * q[r * d + src];
        }
    }
    Ok((values, vectors))
}

/// Eigenvalues clamped into `[0, inf)` after checking they are numerically PSD.
pub(crate) fn psd_eig_f64(c: &[f64], d: usize, tol: f64) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
    let (mut values, vectors) = sym_eig_f64(c, d)?;
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    if let Some(&min) = values.last() {
        if min < -tol * top {
            return Err(LinalgError::NotPsd { min_eigenvalue: min, max_eigenvalue: top });
        }
    }
    values.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok((values, vectors))
}

pub(crate) fn sqrtm_psd_f64(c: &[f64], d: usize, tol: f64) -> Result<Vec<f64>, LinalgError> {
    let (values, q) = psd_eig_f64(c, d, tol)?;
    let roots: Vec<f64> = values.iter().map(|v| v.sqrt()).collect();
    let mut r = vec![0.0f64; d * d];
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += q[i * d + k] * roots[k] * q[j * d + k];
            }
            r[i * d + j] = acc;
            r[j * d + i] = acc;
        }
    }
    Ok(r)
}
