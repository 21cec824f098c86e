//! One-sided (Hestenes) Jacobi SVD.
//!
//! Columns of the working matrix are rotated pairwise in a fixed cyclic order
//! until every pair is orthogonal to within [`ROTATION_TOL`] relative. The
//! accumulated rotations form `V`; the column norms are the singular values and
//! the normalized columns form `U`. Accumulation runs in `f64` and the factors
//! are rounded to `f32` at the end.

use super::{LinalgError, Tensor};

/// A pair is rotated while `|a_i . a_j| > ROTATION_TOL * |a_i| |a_j|`.
pub const ROTATION_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 80;

/// Frozen factors `M = u diag(sigma0) v^T` of one matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdFactors {
    /// `m x s` with orthonormal columns.
    pub u: Tensor,
    /// Length `s`, non-negative and non-increasing.
    pub sigma0: Vec<f32>,
    /// `n x s` with orthonormal columns.
    pub v: Tensor,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma0.len()
    }

    pub fn rows(&self) -> usize {
        self.u.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.v.shape()[0]
    }

    /// `max |u^T u - I|` and `max |v^T v - I|`, evaluated in `f64`.
    pub fn orthonormality_error(&self) -> (f64, f64) {
        (gram_error(&self.u), gram_error(&self.v))
    }

    pub fn bits_eq(&self, other: &SvdFactors) -> bool {
        self.u.bits_eq(&other.u)
            && self.v.bits_eq(&other.v)
            && self.sigma0.len() == other.sigma0.len()
            && self
                .sigma0
                .iter()
                .zip(&other.sigma0)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn gram_error(q: &Tensor) -> f64 {
    let (m, s) = (q.shape()[0], q.shape()[1]);
    let d = q.data();
    let mut worst = 0.0f64;
    for i in 0..s {
        for j in i..s {
            let dot: f64 = (0..m)
                .map(|r| f64::from(d[r * s + i]) * f64::from(d[r * s + j]))
                .sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

/// Thin SVD of an `m x n` matrix; `s = min(m, n)` singular triplets.
///
/// For each column of `u` the entry of largest magnitude (lowest row on ties)
/// is made non-negative, with the sign absorbed into the matching column of `v`.
pub fn svd(matrix: &Tensor) -> Result<SvdFactors, LinalgError> {
    let (m, n) = matrix.dims2()?;
    matrix.ensure_finite()?;
    let src: Vec<f64> = matrix.data().iter().map(|&x| f64::from(x)).collect();
    let (u, sigma, v) = svd_f64(&src, m, n);
    let s = m.min(n);
    Ok(SvdFactors {
        u: Tensor::new([m, s], u.iter().map(|&x| x as f32).collect())?,
        sigma0: sigma.iter().map(|&x| x as f32).collect(),
        v: Tensor::new([n, s], v.iter().map(|&x| x as f32).collect())?,
    })
}

/// `f64` core: returns row-major `u (m x s)`, `sigma (s)`, `v (n x s)`.
pub(crate) fn svd_f64(a: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let transposed = n > m;
    // Work on the tall orientation: p x q with p >= q, stored column-major.
    let (p, q) = if transposed { (n, m) } else { (m, n) };
    let mut cols = vec![0.0f64; p * q];
    for i in 0..m {
        for j in 0..n {
            let (r, c) = if transposed { (j, i) } else { (i, j) };
            cols[c * p + r] = a[i * n + j];
        }
    }
    let mut rot = vec![0.0f64; q * q];
    for i in 0..q {
        rot[i * q + i] = 1.0;
    }

    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..q.saturating_sub(1) {
            for j in (i + 1)..q {
                let (head, tail) = cols.split_at_mut(j * p);
                let ci = &mut head[i * p..(i + 1) * p];
                let cj = &mut tail[..p];
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for (x, y) in ci.iter().zip(cj.iter()) {
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= ROTATION_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(ci, cj, c, s);
                let (rh, rt) = rot.split_at_mut(j * q);
                rotate(&mut rh[i * q..(i + 1) * q], &mut rt[..q], c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut norms: Vec<f64> = (0..q)
        .map(|j| cols[j * p..(j + 1) * p].iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    // Stable sort keeps the lowest column index first on exact ties.
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap());
    let sigma_max = norms.iter().cloned().fold(0.0, f64::max);
    let null_tol = sigma_max * 1e-13 * (p as f64);

    // Left vectors, column-major p x q, in sorted order.
    let mut left = vec![0.0f64; p * q];
    let mut right = vec![0.0f64; q * q];
    let mut sigma = vec![0.0f64; q];
    let mut deficient = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        sigma[dst] = norms[src];
        right[dst * q..(dst + 1) * q].copy_from_slice(&rot[src * q..(src + 1) * q]);
        if norms[src] > null_tol && norms[src] > 0.0 {
            for r in 0..p {
                left[dst * p + r] = cols[src * p + r] / norms[src];
            }
        } else {
            deficient.push(dst);
        }
    }
    norms.clear();
    complete_basis(&mut left, p, q, &deficient);

    // Sign convention on the final left factor.
    let (mut u_cols, mut v_cols, u_len, v_len) = if transposed {
        (right, left, q, p)
    } else {
        (left, right, p, q)
    };
    for k in 0..q {
        let col = &u_cols[k * u_len..(k + 1) * u_len];
        let mut best = 0;
        for r in 1..u_len {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            u_cols[k * u_len..(k + 1) * u_len]
                .iter_mut()
                .for_each(|x| *x = -*x);
            v_cols[k * v_len..(k + 1) * v_len]
                .iter_mut()
                .for_each(|x| *x = -*x);
        }
    }

    (
        col_major_to_row_major(&u_cols, u_len, q),
        sigma,
        col_major_to_row_major(&v_cols, v_len, q),
    )
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Fills the listed columns of a column-major `p x q` basis with unit vectors
/// orthogonal to every other column, choosing the coordinate axis with the
/// largest residual each time.
fn complete_basis(basis: &mut [f64], p: usize, q: usize, missing: &[usize]) {
    let mut filled: Vec<bool> = vec![true; q];
    for &k in missing {
        filled[k] = false;
    }
    for &k in missing {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for axis in 0..p {
            let mut cand = vec![0.0; p];
            cand[axis] = 1.0;
            // Two passes of modified Gram-Schmidt.
            for _ in 0..2 {
                for j in (0..q).filter(|&j| filled[j]) {
                    let col = &basis[j * p..(j + 1) * p];
                    let dot: f64 = col.iter().zip(&cand).map(|(a, b)| a * b).sum();
                    cand.iter_mut().zip(col).for_each(|(c, b)| *c -= dot * b);
                }
            }
            let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, cand));
            }
        }
        let (norm, cand) = best.expect("p >= 1");
        for (dst, c) in basis[k * p..(k + 1) * p].iter_mut().zip(cand) {
            *dst = c / norm;
        }
        filled[k] = true;
    }
}

fn col_major_to_row_major(cols: &[f64], rows: usize, ncols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * ncols];
    for c in 0..ncols {
        for r in 0..rows {
            out[r * ncols + c] = cols[c * rows + r];
        }
    }
    out
}

/// `u diag(sigma) v^T` in original orientation.
pub fn reconstruct(factors: &SvdFactors, sigma: &[f32]) -> Result<Tensor, LinalgError> {
    let s = factors.rank();
    if sigma.len() != s {
        return Err(LinalgError::ShapeMismatch(format!(
            "sigma has length {}, factors have rank {s}",
            sigma.len()
        )));
    }
    let (m, n) = (factors.rows(), factors.cols());
    let mut scaled = factors.u.data().to_vec();
    for row in scaled.chunks_exact_mut(s) {
        row.iter_mut().zip(sigma).for_each(|(x, &g)| *x *= g);
    }
    let mut out = Tensor::zeros([m, n]);
    super::gemm::sgemm(
        super::gemm::MatRef::row_major(&scaled, m, s),
        super::gemm::MatRef::row_major(factors.v.data(), n, s).t(),
        out.data_mut(),
        false,
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn2(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity() {
        let f = svd(&Tensor::identity(2)).unwrap();
        assert_eq!(f.sigma0, vec![1.0, 1.0]);
        assert_eq!(f.u.data(), Tensor::identity(2).data());
        assert_eq!(f.v.data(), Tensor::identity(2).data());
    }

    #[test]
    fn rank_one_column() {
        // M^T M = [[25, 0], [0, 0]].
        let m = Tensor::new([2, 2], vec![3.0, 0.0, 4.0, 0.0]).unwrap();
        let f = svd(&m).unwrap();
        assert!((f.sigma0[0] - 5.0).abs() < 1e-6);
        assert_eq!(f.sigma0[1], 0.0);
        let (eu, ev) = f.orthonormality_error();
        assert!(eu < 1e-6 && ev < 1e-6);
        assert!(reconstruct(&f, &f.sigma0).unwrap().rel_frobenius_error(&m) < 1e-6);
    }

    #[test]
    fn random_8x5_roundtrip() {
        let m = random(8, 5, 7);
        let f = svd(&m).unwrap();
        assert!(reconstruct(&f, &f.sigma0).unwrap().rel_frobenius_error(&m) <= 1e-5);
        assert!(f.sigma0.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn wide_matrix_orientation() {
        let m = random(3, 9, 11);
        let f = svd(&m).unwrap();
        assert_eq!(f.u.shape(), &[3, 3]);
        assert_eq!(f.v.shape(), &[9, 3]);
        assert!(reconstruct(&f, &f.sigma0).unwrap().rel_frobenius_error(&m) <= 1e-5);
    }

    #[test]
    fn sign_convention() {
        let f = svd(&random(12, 6, 3)).unwrap();
        for k in 0..6 {
            let col: Vec<f32> = (0..12).map(|r| f.u.at2(r, k)).collect();
            let best = col
                .iter()
                .enumerate()
                .fold(0, |b, (i, x)| if x.abs() > col[b].abs() { i } else { b });
            assert!(col[best] >= 0.0);
        }
    }

    #[test]
    fn zero_and_degenerate_inputs() {
        let z = Tensor::zeros([4, 3]);
        let f = svd(&z).unwrap();
        assert!(f.sigma0.iter().all(|&s| s == 0.0));
        let (eu, ev) = f.orthonormality_error();
        assert!(eu < 1e-6 && ev < 1e-6);

        let one = Tensor::new([1, 1], vec![-2.0]).unwrap();
        let f = svd(&one).unwrap();
        assert_eq!(f.sigma0, vec![2.0]);
        assert_eq!(f.u.data(), &[1.0]);
        assert_eq!(f.v.data(), &[-1.0]);
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = random(3, 3, 1);
        m.set2(2, 1, f32::INFINITY);
        assert!(matches!(
            svd(&m),
            Err(LinalgError::NonFinite { ref index, .. }) if index == &vec![2, 1]
        ));
    }

    #[test]
    fn reconstruct_rejects_length_mismatch() {
        let f = svd(&random(4, 4, 2)).unwrap();
        assert!(reconstruct(&f, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn doubling_leading_value_adds_three_sigma_squared() {
        let m = random(6, 4, 5);
        let f = svd(&m).unwrap();
        let mut sig = f.sigma0.clone();
        sig[0] *= 2.0;
        let before = m.frobenius_norm().powi(2);
        let after = reconstruct(&f, &sig).unwrap().frobenius_norm().powi(2);
        let expected = before + 3.0 * f64::from(f.sigma0[0]).powi(2);
        assert!((after - expected).abs() / expected < 1e-5);
    }
}
