//! 2D cross-correlation via explicit patch expansion (im2col) and GEMM.
//!
//! Patch columns use the same `(i * k + j) * c_in + a` ordering as
//! [`flatten_conv`], so a flattened kernel multiplies the patch matrix directly.

use serde::{Deserialize, Serialize};

use super::gemm::{sgemm, MatRef};
use super::{LinalgError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zero padding of `(k - 1) / 2`; spatial size is preserved.
    Same,
    Valid,
}

/// `k x k x c_in x c_out` kernel to a `(k^2 c_in) x c_out` matrix.
pub fn flatten_conv(w: &Tensor) -> Result<Tensor, LinalgError> {
    match *w.shape() {
        // Row-major (i, j, a, b) already lays out row (i*k + j)*c_in + a, column b.
        [k1, k2, c_in, c_out] => Tensor::new([k1 * k2 * c_in, c_out], w.data().to_vec()),
        _ => Err(LinalgError::Rank {
            expected: 4,
            got: w.rank(),
        }),
    }
}

/// Inverse of [`flatten_conv`] for a square `k x k` kernel.
pub fn unflatten_conv(flat: &Tensor, k: usize) -> Result<Tensor, LinalgError> {
    let (rows, c_out) = flat.dims2()?;
    if k == 0 || rows % (k * k) != 0 {
        return Err(LinalgError::ShapeMismatch(format!(
            "{rows} rows do not split into {k}x{k} spatial taps"
        )));
    }
    Tensor::new([k, k, rows / (k * k), c_out], flat.data().to_vec())
}

/// Geometry of one batched convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    pub fn new(x_shape: &[usize], k: usize, c_in: usize, padding: Padding) -> Result<Self, LinalgError> {
        let [batch, cx, h, w] = *x_shape else {
            return Err(LinalgError::Rank {
                expected: 4,
                got: x_shape.len(),
            });
        };
        if k.is_multiple_of(2) {
            return Err(LinalgError::ShapeMismatch(format!("kernel size {k} must be odd")));
        }
        if cx != c_in {
            return Err(LinalgError::ShapeMismatch(format!(
                "input has {cx} channels, kernel expects {c_in}"
            )));
        }
        let pad = match padding {
            Padding::Same => (k - 1) / 2,
            Padding::Valid => 0,
        };
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(LinalgError::ShapeMismatch(format!(
                "{h}x{w} input is smaller than the {k}x{k} kernel"
            )));
        }
        Ok(Self {
            batch,
            c_in,
            h,
            w,
            k,
            pad,
            h_out: h + 2 * pad - k + 1,
            w_out: w + 2 * pad - k + 1,
        })
    }

    pub fn rows(&self) -> usize {
        self.batch * self.h_out * self.w_out
    }

    pub fn cols(&self) -> usize {
        self.k * self.k * self.c_in
    }

    /// Patch matrix, `rows() x cols()`, row-major.
    pub fn im2col(&self, x: &[f32]) -> Vec<f32> {
        let (k, c_in, cols) = (self.k, self.c_in, self.cols());
        let mut out = vec![0.0f32; self.rows() * cols];
        for b in 0..self.batch {
            for y in 0..self.h_out {
                for xo in 0..self.w_out {
                    let row = ((b * self.h_out + y) * self.w_out + xo) * cols;
                    for i in 0..k {
                        let yy = (y + i) as isize - self.pad as isize;
                        if yy < 0 || yy >= self.h as isize {
                            continue;
                        }
                        for j in 0..k {
                            let xx = (xo + j) as isize - self.pad as isize;
                            if xx < 0 || xx >= self.w as isize {
                                continue;
                            }
                            let base = row + (i * k + j) * c_in;
                            let src = (b * c_in * self.h + yy as usize) * self.w + xx as usize;
                            for a in 0..c_in {
                                out[base + a] = x[src + a * self.h * self.w];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Adjoint of [`ConvGeom::im2col`]: scatters patch gradients back onto the input.
    pub fn col2im(&self, patches: &[f32]) -> Vec<f32> {
        let (k, c_in, cols) = (self.k, self.c_in, self.cols());
        let mut dx = vec![0.0f32; self.batch * c_in * self.h * self.w];
        for b in 0..self.batch {
            for y in 0..self.h_out {
                for xo in 0..self.w_out {
                    let row = ((b * self.h_out + y) * self.w_out + xo) * cols;
                    for i in 0..k {
                        let yy = (y + i) as isize - self.pad as isize;
                        if yy < 0 || yy >= self.h as isize {
                            continue;
                        }
                        for j in 0..k {
                            let xx = (xo + j) as isize - self.pad as isize;
                            if xx < 0 || xx >= self.w as isize {
                                continue;
                            }
                            let base = row + (i * k + j) * c_in;
                            let dst = (b * c_in * self.h + yy as usize) * self.w + xx as usize;
                            for a in 0..c_in {
                                dx[dst + a * self.h * self.w] += patches[base + a];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// `patches x flat_kernel`, returned as NCHW.
    pub fn forward(&self, patches: &[f32], flat_kernel: &[f32], c_out: usize) -> Vec<f32> {
        let mut rows = vec![0.0f32; self.rows() * c_out];
        sgemm(
            MatRef::row_major(patches, self.rows(), self.cols()),
            MatRef::row_major(flat_kernel, self.cols(), c_out),
            &mut rows,
            false,
        );
        rows_to_nchw(&rows, self.batch, c_out, self.h_out * self.w_out)
    }

    /// Gradient of the flattened kernel, `cols() x c_out`.
    pub fn kernel_grad(&self, patches: &[f32], dout_rows: &[f32], c_out: usize) -> Vec<f32> {
        let mut g = vec![0.0f32; self.cols() * c_out];
        sgemm(
            MatRef::row_major(patches, self.rows(), self.cols()).t(),
            MatRef::row_major(dout_rows, self.rows(), c_out),
            &mut g,
            false,
        );
        g
    }

    /// Gradient of the NCHW input.
    pub fn input_grad(&self, dout_rows: &[f32], flat_kernel: &[f32], c_out: usize) -> Vec<f32> {
        let mut dpatches = vec![0.0f32; self.rows() * self.cols()];
        sgemm(
            MatRef::row_major(dout_rows, self.rows(), c_out),
            MatRef::row_major(flat_kernel, self.cols(), c_out).t(),
            &mut dpatches,
            false,
        );
        self.col2im(&dpatches)
    }
}

/// `(batch * hw) x c` rows to `batch x c x hw`.
pub(crate) fn rows_to_nchw(rows: &[f32], batch: usize, c: usize, hw: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; rows.len()];
    for b in 0..batch {
        for p in 0..hw {
            let src = (b * hw + p) * c;
            for ch in 0..c {
                out[(b * c + ch) * hw + p] = rows[src + ch];
            }
        }
    }
    out
}

/// `batch x c x hw` to `(batch * hw) x c` rows.
pub(crate) fn nchw_to_rows(x: &[f32], batch: usize, c: usize, hw: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; x.len()];
    for b in 0..batch {
        for ch in 0..c {
            let src = (b * c + ch) * hw;
            for p in 0..hw {
                out[(b * hw + p) * c + ch] = x[src + p];
            }
        }
    }
    out
}

/// Cross-correlation of `x` (batch x c_in x h x w) with `w` (k x k x c_in x c_out).
pub fn conv2d(x: &Tensor, w: &Tensor, padding: Padding) -> Result<Tensor, LinalgError> {
    let [k1, k2, c_in, c_out] = *w.shape() else {
        return Err(LinalgError::Rank {
            expected: 4,
            got: w.rank(),
        });
    };
    if k1 != k2 {
        return Err(LinalgError::ShapeMismatch(format!("non-square kernel {k1}x{k2}")));
    }
    let geom = ConvGeom::new(x.shape(), k1, c_in, padding)?;
    let patches = geom.im2col(x.data());
    let out = geom.forward(&patches, w.data(), c_out);
    Tensor::new([geom.batch, c_out, geom.h_out, geom.w_out], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_shape_and_index() {
        let w = Tensor::zeros([3, 3, 64, 128]);
        assert_eq!(flatten_conv(&w).unwrap().shape(), &[576, 128]);

        let data: Vec<f32> = (0..3 * 3 * 8 * 16).map(|v| v as f32).collect();
        let w = Tensor::new([3, 3, 8, 16], data).unwrap();
        let flat = flatten_conv(&w).unwrap();
        assert_eq!(flat.at2(45, 7), w.at4([1, 2, 5, 7]));
        assert!(unflatten_conv(&flat, 3).unwrap().bits_eq(&w));
    }

    #[test]
    fn flatten_rejects_rank2() {
        assert!(flatten_conv(&Tensor::zeros([3, 3])).is_err());
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor::new([1, 1, 2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let w = Tensor::new([1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d(&x, &w, Padding::Same).unwrap().data(), x.data());
    }

    #[test]
    fn ones_kernel_counts_support() {
        let x = Tensor::filled([1, 1, 4, 4], 1.0);
        let w = Tensor::filled([3, 3, 1, 1], 1.0);
        let y = conv2d(&x, &w, Padding::Same).unwrap();
        assert_eq!(y.at4([0, 0, 0, 0]), 4.0);
        assert_eq!(y.at4([0, 0, 0, 3]), 4.0);
        assert_eq!(y.at4([0, 0, 3, 3]), 4.0);
        assert_eq!(y.at4([0, 0, 0, 1]), 6.0);
        assert_eq!(y.at4([0, 0, 1, 1]), 9.0);
        assert_eq!(y.at4([0, 0, 2, 2]), 9.0);
        let v = conv2d(&x, &w, Padding::Valid).unwrap();
        assert_eq!(v.shape(), &[1, 1, 2, 2]);
        assert!(v.data().iter().all(|&p| p == 9.0));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let x = Tensor::zeros([1, 2, 4, 4]);
        let w = Tensor::zeros([3, 3, 3, 1]);
        assert!(conv2d(&x, &w, Padding::Same).is_err());
    }

    #[test]
    fn even_kernel_rejected() {
        let x = Tensor::zeros([1, 1, 4, 4]);
        let w = Tensor::zeros([2, 2, 1, 1]);
        assert!(conv2d(&x, &w, Padding::Valid).is_err());
    }
}
