//! Dense row-major f64 tensors and the matrix kernels behind the
//! networks. Everything is two-dimensional in practice; shapes are kept
//! as a vector so feature matrices, masks and scalars share one type.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapeError {
    #[error("data length {data_len} does not match shape product {shape_len}")]
    DataLength { data_len: usize, shape_len: usize },
    #[error("inner dimensions disagree: [{m}x{k1}] x [{k2}x{n}]")]
    MatmulInner { m: usize, k1: usize, k2: usize, n: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Mismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("expected a matrix, got shape {got:?}")]
    NotAMatrix { got: Vec<usize> },
    #[error("reshape from {from:?} to {to:?} changes element count")]
    BadReshape { from: Vec<usize>, to: Vec<usize> },
}

/// Dense tensor of 64-bit floats in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self, ShapeError> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(ShapeError::DataLength { data_len: data.len(), shape_len: n });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self { shape, data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1, 1], data: vec![value] }
    }

    /// Column vector [n x 1].
    pub fn column(data: Vec<f64>) -> Self {
        let n = data.len();
        Self { shape: vec![n, 1], data }
    }

    /// Row vector [1 x n].
    pub fn row(data: Vec<f64>) -> Self {
        let n = data.len();
        Self { shape: vec![1, n], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        Self::from_vec(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Scalar value; panics if the tensor is not 1-element.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on non-scalar tensor {:?}", self.shape);
        self.data[0]
    }

    fn dims2(&self) -> Result<(usize, usize), ShapeError> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(ShapeError::NotAMatrix { got: self.shape.clone() }),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims2().expect("rows() on non-matrix").0
    }

    pub fn cols(&self) -> usize {
        self.dims2().expect("cols() on non-matrix").1
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let (_, c) = self.dims2().expect("row_slice() on non-matrix");
        &self.data[r * c..(r + 1) * c]
    }

    pub fn reshaped(&self, shape: impl Into<Vec<usize>>) -> Result<Self, ShapeError> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(ShapeError::BadReshape { from: self.shape.clone(), to: shape });
        }
        Ok(Self { shape, data: self.data.clone() })
    }

    pub fn same_shape(&self, other: &Tensor) -> Result<(), ShapeError> {
        if self.shape != other.shape {
            return Err(ShapeError::Mismatch {
                expected: self.shape.clone(),
                got: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, ShapeError> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Matrix product. Dispatches to a cache-blocked kernel; the hidden
    /// layers of the lifting network dominate the training cost.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, ShapeError> {
        let (m, k1) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k1 != k2 {
            return Err(ShapeError::MatmulInner { m, k1, k2, n });
        }
        let mut out = vec![0.0; m * n];
        mm_nn(&self.data, &other.data, &mut out, m, k1, n);
        Tensor::from_vec(vec![m, n], out)
    }

    /// self^T * other, without materializing the transpose.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor, ShapeError> {
        let (k1, m) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k1 != k2 {
            return Err(ShapeError::MatmulInner { m, k1, k2, n });
        }
        let mut out = vec![0.0; m * n];
        mm_tn(&self.data, &other.data, &mut out, k1, m, n);
        Tensor::from_vec(vec![m, n], out)
    }

    /// self * other^T. Materializes the transpose of `other` once, which
    /// beats strided accesses into the large square weight matrices.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor, ShapeError> {
        let (m, k1) = self.dims2()?;
        let (n, k2) = other.dims2()?;
        if k1 != k2 {
            return Err(ShapeError::MatmulInner { m, k1, k2, n });
        }
        let bt = transpose(&other.data, n, k1);
        let mut out = vec![0.0; m * n];
        mm_nn(&self.data, &bt, &mut out, m, k1, n);
        Tensor::from_vec(vec![m, n], out)
    }
}

/// Tile width for the j (output column) dimension. One f64 tile of a B
/// row fits comfortably in L1 and the C tile stays resident across k.
const J_TILE: usize = 512;

/// C += A * B with A [m x k], B [k x n], C [m x n], all row-major.
/// Column-tiled with k outer and the A rows inner, so each B row tile
/// is read once from memory while the C tiles stay cache-resident; the
/// contiguous inner loop autovectorizes.
fn mm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    let mut j0 = 0;
    while j0 < n {
        let jw = J_TILE.min(n - j0);
        for kk in 0..k {
            let b_tile = &b[kk * n + j0..kk * n + j0 + jw];
            for i in 0..m {
                let aik = a[i * k + kk];
                if aik == 0.0 {
                    continue;
                }
                let c_tile = &mut c[i * n + j0..i * n + j0 + jw];
                for (cv, &bv) in c_tile.iter_mut().zip(b_tile) {
                    *cv += aik * bv;
                }
            }
        }
        j0 += jw;
    }
}

/// C += A^T * B with A [k x m], B [k x n], C [m x n]. Used for weight
/// gradients dW = X^T * dY where k is the small (batch) dimension: each
/// C row tile accumulates over all k in one pass and is written once.
fn mm_tn(a: &[f64], b: &[f64], c: &mut [f64], k: usize, m: usize, n: usize) {
    let mut j0 = 0;
    while j0 < n {
        let jw = J_TILE.min(n - j0);
        for i in 0..m {
            let c_tile = &mut c[i * n + j0..i * n + j0 + jw];
            for kk in 0..k {
                let aki = a[kk * m + i];
                if aki == 0.0 {
                    continue;
                }
                let b_tile = &b[kk * n + j0..kk * n + j0 + jw];
                for (cv, &bv) in c_tile.iter_mut().zip(b_tile) {
                    *cv += aki * bv;
                }
            }
        }
        j0 += jw;
    }
}

/// Blocked out-of-place transpose of a row-major [r x c] buffer.
fn transpose(src: &[f64], r: usize, c: usize) -> Vec<f64> {
    const B: usize = 32;
    let mut dst = vec![0.0; src.len()];
    let mut i0 = 0;
    while i0 < r {
        let ih = B.min(r - i0);
        let mut j0 = 0;
        while j0 < c {
            let jw = B.min(c - j0);
            for i in i0..i0 + ih {
                for j in j0..j0 + jw {
                    dst[j * r + i] = src[i * c + j];
                }
            }
            j0 += jw;
        }
        i0 += ih;
    }
    dst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        let data = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::matrix(r, c, data).unwrap()
    }

    /// Independent triple-loop product used as the matmul oracle.
    fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for kk in 0..k {
                    acc += a.data()[i * k + kk] * b.data()[kk * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        Tensor::matrix(m, n, out).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(eye.matmul(&m).unwrap(), m);
        assert_eq!(m.matmul(&eye).unwrap(), m);
    }

    #[test]
    fn matmul_hand_expansion() {
        let a = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.item(), 11.0);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 5, 4);
        let b = random_matrix(&mut rng, 4, 3);
        let got = a.matmul(&b).unwrap();
        let want = naive_matmul(&a, &b);
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn matmul_variants_agree_with_explicit_transposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(m, k, n) in &[(3, 5, 4), (7, 2, 9), (1, 600, 13), (33, 70, 65)] {
            let a = random_matrix(&mut rng, m, k);
            let b = random_matrix(&mut rng, k, n);
            let want = naive_matmul(&a, &b);

            let got = a.matmul(&b).unwrap();
            assert_eq!(got.shape(), want.shape());
            for (g, w) in got.data().iter().zip(want.data()) {
                assert!((g - w).abs() < 1e-12);
            }

            // A^T stored explicitly, recombined through matmul_tn.
            let at = Tensor::matrix(k, m, transpose(a.data(), m, k)).unwrap();
            let got_tn = at.matmul_tn(&b).unwrap();
            for (g, w) in got_tn.data().iter().zip(want.data()) {
                assert!((g - w).abs() < 1e-12);
            }

            // B^T stored explicitly, recombined through matmul_nt.
            let bt = Tensor::matrix(n, k, transpose(b.data(), k, n)).unwrap();
            let got_nt = a.matmul_nt(&bt).unwrap();
            for (g, w) in got_nt.data().iter().zip(want.data()) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![4, 2]);
        assert!(matches!(a.matmul(&b), Err(ShapeError::MatmulInner { .. })));
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(matches!(
            Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0]),
            Err(ShapeError::DataLength { .. })
        ));
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let r = t.reshaped(vec![3, 2]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshaped(vec![4, 2]).is_err());
    }
}
