//! Shaped arrays of rank 1 or 2 with the forward math used by the tape.
//!
//! Row-major storage. No broadcasting beyond the row-vector bias add that the
//! models need; shape mismatches are rejected with both shapes named.

use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum NumError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: unsupported shape {shape:?} ({expected})")]
    BadShape {
        op: &'static str,
        expected: &'static str,
        shape: Vec<usize>,
    },
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("{op}: index {index} out of bounds for size {size}")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        size: usize,
    },
    #[error("{op}: softmax row {row} has no unmasked entries")]
    AllMasked { op: &'static str, row: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter `{0}` already registered")]
    DuplicateParam(String),
    #[error("checkpoint i/o: {0}")]
    CheckpointIo(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    CheckpointFormat(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Boolean matrix used to restrict softmax support (attention masks and
/// graph neighborhoods).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoolMat {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl BoolMat {
    pub fn new(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self, NumError> {
        if data.len() != rows * cols {
            return Err(NumError::BadShape {
                op: "BoolMat::new",
                expected: "rows*cols entries",
                shape: vec![rows, cols],
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Mask where every row allows the same set of columns.
    pub fn from_cols(rows: usize, allowed: &[bool]) -> Self {
        let mut data = Vec::with_capacity(rows * allowed.len());
        for _ in 0..rows {
            data.extend_from_slice(allowed);
        }
        Self {
            rows,
            cols: allowed.len(),
            data,
        }
    }

    /// Lower-triangular mask over `n` positions, optionally restricted to
    /// `allowed` columns.
    pub fn causal(n: usize) -> Self {
        let mut data = vec![false; n * n];
        for i in 0..n {
            for j in 0..=i {
                data[i * n + j] = true;
            }
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self, NumError> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || shape.len() > 2 || shape.contains(&0) {
            return Err(NumError::BadShape {
                op: "Tensor::from_vec",
                expected: "rank 1 or 2 with positive dims",
                shape,
            });
        }
        if n != data.len() {
            return Err(NumError::BadShape {
                op: "Tensor::from_vec",
                expected: "product(shape) == data.len()",
                shape,
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], x: T) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![x; n],
        }
    }

    pub fn scalar(x: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, NumError> {
        Self::from_vec(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, NumError> {
        if rows.is_empty() {
            return Err(NumError::Empty {
                op: "Tensor::from_rows",
            });
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NumError::BadShape {
                    op: "Tensor::from_rows",
                    expected: "equal row lengths",
                    shape: vec![rows.len(), r.len()],
                });
            }
            data.extend_from_slice(r);
        }
        Self::matrix(rows.len(), cols, data)
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Rank-2 dimensions, rejecting other ranks.
    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize), NumError> {
        if self.rank() == 2 {
            Ok((self.shape[0], self.shape[1]))
        } else {
            Err(NumError::BadShape {
                op,
                expected: "rank-2 tensor",
                shape: self.shape.clone(),
            })
        }
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        debug_assert_eq!(self.rank(), 2);
        self.data[r * self.shape[1] + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut T {
        debug_assert_eq!(self.rank(), 2);
        &mut self.data[r * self.shape[1] + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        debug_assert_eq!(self.rank(), 2);
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    pub fn item(&self) -> Result<T, NumError> {
        if self.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(NumError::BadShape {
                op: "Tensor::item",
                expected: "single-element tensor",
                shape: self.shape.clone(),
            })
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self, NumError> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.is_empty() || shape.len() > 2 {
            return Err(NumError::BadShape {
                op: "Tensor::reshaped",
                expected: "same element count, rank 1 or 2",
                shape: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, rhs: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self, NumError> {
        if self.shape != rhs.shape {
            return Err(NumError::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self, NumError> {
        self.zip_map(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self, NumError> {
        self.zip_map(rhs, "sub", |a, b| a - b)
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self, NumError> {
        self.zip_map(rhs, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    pub fn relu(&self) -> Self {
        self.map(|x| if x > T::zero() { x } else { T::zero() })
    }

    /// Add `bias` (rank 1, length = cols) to every row of a rank-2 tensor.
    pub fn add_row(&self, bias: &Self) -> Result<Self, NumError> {
        let (r, c) = self.dims2("add_row")?;
        if bias.rank() != 1 || bias.len() != c {
            return Err(NumError::ShapeMismatch {
                op: "add_row",
                lhs: self.shape.clone(),
                rhs: bias.shape.clone(),
            });
        }
        let mut out = self.clone();
        for i in 0..r {
            for j in 0..c {
                out.data[i * c + j] += bias.data[j];
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, NumError> {
        let (n, m) = self.dims2("matmul")?;
        let (m2, p) = rhs.dims2("matmul")?;
        if m != m2 {
            return Err(NumError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let mut out = vec![T::zero(); n * p];
        for i in 0..n {
            for k in 0..m {
                let a = self.data[i * m + k];
                if a == T::zero() {
                    continue;
                }
                let rrow = &rhs.data[k * p..(k + 1) * p];
                let orow = &mut out[i * p..(i + 1) * p];
                for j in 0..p {
                    orow[j] += a * rrow[j];
                }
            }
        }
        Tensor::matrix(n, p, out)
    }

    pub fn transpose(&self) -> Result<Self, NumError> {
        let (n, m) = self.dims2("transpose")?;
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Tensor::matrix(m, n, out)
    }

    /// Concatenate along `axis`. Rank-1 inputs concatenate end to end
    /// (axis must be 0); rank-2 inputs stack rows (axis 0) or columns (axis 1).
    pub fn concat(parts: &[&Self], axis: usize) -> Result<Self, NumError> {
        if parts.is_empty() {
            return Err(NumError::Empty { op: "concat" });
        }
        let rank = parts[0].rank();
        if rank == 1 {
            if axis != 0 {
                return Err(NumError::BadShape {
                    op: "concat",
                    expected: "axis 0 for rank-1 inputs",
                    shape: vec![axis],
                });
            }
            let mut data = Vec::new();
            for p in parts {
                if p.rank() != 1 {
                    return Err(NumError::ShapeMismatch {
                        op: "concat",
                        lhs: parts[0].shape.clone(),
                        rhs: p.shape.clone(),
                    });
                }
                data.extend_from_slice(&p.data);
            }
            return Ok(Tensor::vector(data));
        }
        match axis {
            0 => {
                let cols = parts[0].shape[1];
                let mut data = Vec::new();
                let mut rows = 0;
                for p in parts {
                    let (r, c) = p.dims2("concat")?;
                    if c != cols {
                        return Err(NumError::ShapeMismatch {
                            op: "concat",
                            lhs: parts[0].shape.clone(),
                            rhs: p.shape.clone(),
                        });
                    }
                    rows += r;
                    data.extend_from_slice(&p.data);
                }
                Tensor::matrix(rows, cols, data)
            }
            1 => {
                let rows = parts[0].shape[0];
                let mut cols = 0;
                for p in parts {
                    let (r, c) = p.dims2("concat")?;
                    if r != rows {
                        return Err(NumError::ShapeMismatch {
                            op: "concat",
                            lhs: parts[0].shape.clone(),
                            rhs: p.shape.clone(),
                        });
                    }
                    cols += c;
                }
                let mut data = Vec::with_capacity(rows * cols);
                for i in 0..rows {
                    for p in parts {
                        let c = p.shape[1];
                        data.extend_from_slice(&p.data[i * c..(i + 1) * c]);
                    }
                }
                Tensor::matrix(rows, cols, data)
            }
            _ => Err(NumError::BadShape {
                op: "concat",
                expected: "axis 0 or 1",
                shape: vec![axis],
            }),
        }
    }

    /// Mean over rows of a rank-2 tensor: `[n, d] -> [d]`.
    pub fn mean_axis0(&self) -> Result<Self, NumError> {
        let (n, d) = self.dims2("mean_axis0")?;
        let inv = T::one() / T::from_f64_lossy(n as f64);
        let mut out = vec![T::zero(); d];
        for i in 0..n {
            for j in 0..d {
                out[j] += self.data[i * d + j];
            }
        }
        for v in &mut out {
            *v *= inv;
        }
        Ok(Tensor::vector(out))
    }

    pub fn sum_all(&self) -> Self {
        Tensor::scalar(self.data.iter().copied().sum())
    }

    /// Numerically stable softmax along `axis` (0 for rank-1; 0 or 1 for rank-2).
    /// Rejects non-finite input.
    pub fn softmax(&self, axis: usize) -> Result<Self, NumError> {
        if !self.all_finite() {
            return Err(NumError::NonFinite { op: "softmax" });
        }
        match self.rank() {
            1 => {
                if axis != 0 {
                    return Err(NumError::BadShape {
                        op: "softmax",
                        expected: "axis 0 for rank-1",
                        shape: vec![axis],
                    });
                }
                let mut out = self.clone();
                softmax_slice(&mut out.data);
                Ok(out)
            }
            2 => {
                let (n, m) = self.dims2("softmax")?;
                let mut out = self.clone();
                match axis {
                    1 => {
                        for i in 0..n {
                            softmax_slice(&mut out.data[i * m..(i + 1) * m]);
                        }
                    }
                    0 => {
                        for j in 0..m {
                            let mut col: Vec<T> = (0..n).map(|i| self.data[i * m + j]).collect();
                            softmax_slice(&mut col);
                            for i in 0..n {
                                out.data[i * m + j] = col[i];
                            }
                        }
                    }
                    _ => {
                        return Err(NumError::BadShape {
                            op: "softmax",
                            expected: "axis 0 or 1",
                            shape: vec![axis],
                        })
                    }
                }
                Ok(out)
            }
            _ => unreachable!("tensors are rank 1 or 2"),
        }
    }

    /// Row-wise softmax restricted to `mask`'s true entries; masked entries are 0.
    pub fn masked_softmax(&self, mask: &BoolMat) -> Result<Self, NumError> {
        let (n, m) = self.dims2("masked_softmax")?;
        if mask.rows() != n || mask.cols() != m {
            return Err(NumError::ShapeMismatch {
                op: "masked_softmax",
                lhs: self.shape.clone(),
                rhs: vec![mask.rows(), mask.cols()],
            });
        }
        if !self.all_finite() {
            return Err(NumError::NonFinite {
                op: "masked_softmax",
            });
        }
        let mut out = Tensor::zeros(&[n, m]);
        for i in 0..n {
            let mut max = T::neg_infinity();
            let mut any = false;
            for j in 0..m {
                if mask.at(i, j) {
                    any = true;
                    let v = self.data[i * m + j];
                    if v > max {
                        max = v;
                    }
                }
            }
            if !any {
                return Err(NumError::AllMasked {
                    op: "masked_softmax",
                    row: i,
                });
            }
            let mut sum = T::zero();
            for j in 0..m {
                if mask.at(i, j) {
                    let e = (self.data[i * m + j] - max).exp();
                    out.data[i * m + j] = e;
                    sum += e;
                }
            }
            for j in 0..m {
                if mask.at(i, j) {
                    out.data[i * m + j] /= sum;
                }
            }
        }
        Ok(out)
    }

    /// Gather rows of an embedding table: `self` is `[V, d]`, result `[ids.len(), d]`.
    pub fn embedding_rows(&self, ids: &[usize]) -> Result<Self, NumError> {
        let (v, d) = self.dims2("embedding")?;
        if ids.is_empty() {
            return Err(NumError::Empty { op: "embedding" });
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(NumError::IndexOutOfBounds {
                    op: "embedding",
                    index: id,
                    size: v,
                });
            }
            data.extend_from_slice(&self.data[id * d..(id + 1) * d]);
        }
        Tensor::matrix(ids.len(), d, data)
    }

    /// Mean token-level cross-entropy of row-wise logits against target ids.
    pub fn cross_entropy_mean(&self, targets: &[usize]) -> Result<Self, NumError> {
        let (n, v) = self.dims2("cross_entropy")?;
        if targets.len() != n {
            return Err(NumError::ShapeMismatch {
                op: "cross_entropy",
                lhs: self.shape.clone(),
                rhs: vec![targets.len()],
            });
        }
        if !self.all_finite() {
            return Err(NumError::NonFinite {
                op: "cross_entropy",
            });
        }
        let mut total = T::zero();
        for (i, &t) in targets.iter().enumerate() {
            if t >= v {
                return Err(NumError::IndexOutOfBounds {
                    op: "cross_entropy",
                    index: t,
                    size: v,
                });
            }
            let row = &self.data[i * v..(i + 1) * v];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max
                + row
                    .iter()
                    .map(|&z| (z - max).exp())
                    .sum::<T>()
                    .ln();
            total += lse - row[t];
        }
        Ok(Tensor::scalar(total / T::from_f64_lossy(n as f64)))
    }

    /// Row-wise layer normalization with learned gain and bias (both rank 1).
    pub fn layer_norm(&self, gain: &Self, bias: &Self, eps: T) -> Result<Self, NumError> {
        let (n, d) = self.dims2("layer_norm")?;
        if gain.rank() != 1 || gain.len() != d || bias.rank() != 1 || bias.len() != d {
            return Err(NumError::ShapeMismatch {
                op: "layer_norm",
                lhs: self.shape.clone(),
                rhs: gain.shape.clone(),
            });
        }
        let inv_d = T::one() / T::from_f64_lossy(d as f64);
        let mut out = Tensor::zeros(&[n, d]);
        for i in 0..n {
            let row = &self.data[i * d..(i + 1) * d];
            let mu = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&x| (x - mu) * (x - mu)).sum::<T>() * inv_d;
            let inv_std = T::one() / (var + eps).sqrt();
            for j in 0..d {
                let xhat = (row[j] - mu) * inv_std;
                out.data[i * d + j] = xhat * gain.data[j] + bias.data[j];
            }
        }
        Ok(out)
    }
}

fn softmax_slice<T: Scalar>(xs: &mut [T]) {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T = Tensor<f64>;

    #[test]
    fn matmul_identity() {
        let i = T::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let v = T::matrix(2, 1, vec![2.0, 3.0]).unwrap();
        let out = i.matmul(&v).unwrap();
        assert_eq!(out.data(), &[2.0, 3.0]);
        assert_eq!(out.shape(), &[2, 1]);
    }

    #[test]
    fn relu_by_definition() {
        let x = T::vector(vec![-1.0, 0.0, 2.0]);
        assert_eq!(x.relu().data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn mean_over_rows() {
        let x = T::matrix(2, 2, vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let m = x.mean_axis0().unwrap();
        assert_eq!(m.data(), &[3.0, 5.0]);
        assert_eq!(m.shape(), &[2]);
    }

    #[test]
    fn softmax_symmetry_and_single() {
        let s = T::vector(vec![0.0, 0.0]).softmax(0).unwrap();
        assert!((s.data()[0] - 0.5).abs() < 1e-15);
        assert!((s.data()[1] - 0.5).abs() < 1e-15);
        let one = T::vector(vec![3.7]).softmax(0).unwrap();
        assert_eq!(one.data(), &[1.0]);
    }

    #[test]
    fn softmax_matches_direct_exponentiation() {
        // Independent oracle: direct exp/sum without the max shift.
        let logits = [1.0f64, 2.0, 3.0];
        let denom: f64 = logits.iter().map(|x| x.exp()).sum();
        let expected: Vec<f64> = logits.iter().map(|x| x.exp() / denom).collect();
        let got = T::vector(logits.to_vec()).softmax(0).unwrap();
        for (g, e) in got.data().iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let x = T::vector(vec![0.3, -1.2, 4.0, 2.2]);
        let a = x.softmax(0).unwrap();
        let b = x.map(|v| v + 123.456).softmax(0).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_nonfinite() {
        let x = T::vector(vec![f64::NAN, 1.0]);
        assert!(matches!(x.softmax(0), Err(NumError::NonFinite { .. })));
        let y = T::vector(vec![f64::INFINITY, 1.0]);
        assert!(y.softmax(0).is_err());
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let a = T::matrix(2, 3, vec![0.0; 6]).unwrap();
        let b = T::matrix(2, 3, vec![0.0; 6]).unwrap();
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "diagnostic should name shapes: {msg}");
    }

    #[test]
    fn concat_axis1() {
        let a = T::matrix(2, 1, vec![1.0, 2.0]).unwrap();
        let b = T::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = T::concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
    }

    #[test]
    fn masked_softmax_rows_sum_to_one_on_support() {
        let x = T::matrix(2, 3, vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
        let mask = BoolMat::new(2, 3, vec![true, false, true, true, true, true]).unwrap();
        let y = x.masked_softmax(&mask).unwrap();
        assert_eq!(y.at(0, 1), 0.0);
        let r0: f64 = y.row(0).iter().sum();
        let r1: f64 = y.row(1).iter().sum();
        assert!((r0 - 1.0).abs() < 1e-12);
        assert!((r1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_uniform_is_log_v() {
        let logits = T::matrix(2, 5, vec![0.0; 10]).unwrap();
        let loss = logits.cross_entropy_mean(&[0, 3]).unwrap().item().unwrap();
        assert!((loss - (5.0f64).ln()).abs() < 1e-12);
    }
}
