use super::LinalgError;

/// Dense row-major `f32` array of rank 1 to 4. The last axis is fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self, LinalgError> {
        let shape = shape.into();
        check_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(LinalgError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    /// Constructor for data arriving from I/O: additionally rejects NaN/Inf.
    pub fn from_finite(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self, LinalgError> {
        let t = Self::new(shape, data)?;
        t.ensure_finite()?;
        Ok(t)
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n]).expect("zeros: invalid shape")
    }

    pub fn filled(shape: impl Into<Vec<usize>>, value: f32) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros([n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds an `m x n` matrix from a closure over `(row, col)`.
    pub fn from_fn2(m: usize, n: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self::new([m, n], data).expect("from_fn2: invalid shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self, LinalgError> {
        Self::new(shape, self.data)
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize), LinalgError> {
        match self.shape[..] {
            [m, n] => Ok((m, n)),
            _ => Err(LinalgError::Rank {
                expected: 2,
                got: self.rank(),
            }),
        }
    }

    pub fn at2(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.shape[1] + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, value: f32) {
        let n = self.shape[1];
        self.data[i * n + j] = value;
    }

    pub fn at4(&self, idx: [usize; 4]) -> f32 {
        let s = &self.shape;
        self.data[((idx[0] * s[1] + idx[1]) * s[2] + idx[2]) * s[3] + idx[3]]
    }

    pub fn ensure_finite(&self) -> Result<(), LinalgError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(flat) => Err(LinalgError::NonFinite {
                index: self.unravel(flat),
                value: self.data[flat],
            }),
        }
    }

    /// Multi-index of a flat offset.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for (slot, &extent) in idx.iter_mut().zip(&self.shape).rev() {
            *slot = flat % extent;
            flat /= extent;
        }
        idx
    }

    /// Bit-level equality, distinguishing `-0.0` from `0.0` and comparing NaN payloads.
    pub fn bits_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    pub fn transpose2(&self) -> Result<Tensor, LinalgError> {
        let (m, n) = self.dims2()?;
        Ok(Tensor::from_fn2(n, m, |i, j| self.at2(j, i)))
    }

    /// Plain matrix product of two rank-2 tensors.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, LinalgError> {
        let (m, k) = self.dims2()?;
        let (k2, n) = rhs.dims2()?;
        if k != k2 {
            return Err(LinalgError::ShapeMismatch(format!(
                "matmul {:?} x {:?}",
                self.shape, rhs.shape
            )));
        }
        let mut out = Tensor::zeros([m, n]);
        super::gemm::sgemm(
            super::gemm::MatRef::row_major(&self.data, m, k),
            super::gemm::MatRef::row_major(&rhs.data, k, n),
            &mut out.data,
            false,
        );
        Ok(out)
    }

    /// Relative Frobenius distance `|self - other|_F / max(|other|_F, eps)`.
    pub fn rel_frobenius_error(&self, reference: &Tensor) -> f64 {
        let diff: f64 = self
            .data
            .iter()
            .zip(&reference.data)
            .map(|(&a, &b)| {
                let d = f64::from(a) - f64::from(b);
                d * d
            })
            .sum::<f64>()
            .sqrt();
        diff / reference.frobenius_norm().max(f64::EPSILON)
    }
}

fn check_shape(shape: &[usize]) -> Result<(), LinalgError> {
    if shape.is_empty() || shape.len() > 4 || shape.contains(&0) {
        return Err(LinalgError::InvalidShape(shape.to_vec()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(vec![], vec![]).is_err());
        assert!(Tensor::new([1, 1, 1, 1, 1], vec![0.0]).is_err());
        assert!(Tensor::new([2, 0], vec![]).is_err());
        assert!(Tensor::new([2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn non_finite_names_index() {
        let err = Tensor::from_finite([2, 3], vec![0.0, 0.0, 0.0, 0.0, f32::NAN, 0.0]).unwrap_err();
        match err {
            LinalgError::NonFinite { index, .. } => assert_eq!(index, vec![1, 1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn matmul_small() {
        let a = Tensor::new([2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::new([3, 1], vec![1., 0., -1.]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[-2.0, -2.0]);
    }
}
