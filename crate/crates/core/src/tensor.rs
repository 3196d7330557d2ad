//! Dense row-major f64 tensors and the raw kernels behind the tape ops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense tensor: row-major 64-bit values plus a shape.
///
/// Everything in this crate is rank 1 or 2; the shape vector keeps the
/// representation uniform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![v],
        }
    }

    /// Row-major matrix constructor.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows of a rank-2 tensor (rank-1 tensors count as a single row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            1 => 1,
            _ => panic!("rows() on rank-{} tensor", self.shape.len()),
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[1],
            1 => self.shape[0],
            _ => panic!("cols() on rank-{} tensor", self.shape.len()),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub fn scalar_value(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// C = A @ B for A: [m,k], B: [k,n]. i-k-j loop order keeps the inner loop
/// contiguous over both B and C rows.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
        return Err(shape_err("matmul", &a.shape, &b.shape));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a.data[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b.data[p * n..(p + 1) * n];
            for (c_j, &b_pj) in c_row.iter_mut().zip(b_row) {
                *c_j += a_ip * b_pj;
            }
        }
    }
    Ok(Tensor::matrix(m, n, c))
}

/// C = A @ B^T for A: [m,k], B: [n,k]. Row-against-row dot products.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[1] {
        return Err(shape_err("matmul_nt", &a.shape, &b.shape));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[0]);
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b.data[j * k..(j + 1) * k];
            c[i * n + j] = dot(a_row, b_row);
        }
    }
    Ok(Tensor::matrix(m, n, c))
}

/// C = A^T @ B for A: [m,k], B: [m,n]. Used by matmul backward.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[0] != b.shape[0] {
        return Err(shape_err("matmul_tn", &a.shape, &b.shape));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let a_row = &a.data[i * k..(i + 1) * k];
        let b_row = &b.data[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let c_row = &mut c[p * n..(p + 1) * n];
            for (c_j, &b_ij) in c_row.iter_mut().zip(b_row) {
                *c_j += a_ip * b_ij;
            }
        }
    }
    Ok(Tensor::matrix(k, n, c))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Guard added to the L2 denominator so zero vectors normalize to zero
/// instead of NaN.
pub const NORM_GUARD: f64 = 1e-12;

/// Row-wise L2 normalization with the zero-norm guard.
pub fn l2_normalize_rows(a: &Tensor) -> Tensor {
    let (m, n) = (a.rows(), a.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &a.data[i * n..(i + 1) * n];
        let denom = l2_norm(row) + NORM_GUARD;
        for (o, &x) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
            *o = x / denom;
        }
    }
    Tensor::new(a.shape.clone(), out)
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(a: &Tensor) -> Tensor {
    let (m, n) = (a.rows(), a.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &a.data[i * n..(i + 1) * n];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let o = &mut out[i * n..(i + 1) * n];
        let mut sum = 0.0;
        for (oj, &x) in o.iter_mut().zip(row) {
            *oj = (x - max).exp();
            sum += *oj;
        }
        for oj in o.iter_mut() {
            *oj /= sum;
        }
    }
    Tensor::new(a.shape.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_hand_arithmetic() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::matrix(2, 1, vec![1.0, 1.0]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape, vec![2, 1]);
        assert_eq!(c.data, vec![3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_op() {
        let a = Tensor::matrix(2, 3, vec![0.0; 6]);
        let b = Tensor::matrix(2, 2, vec![0.0; 4]);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul"), "{msg}");
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn l2_normalize_three_four_five() {
        let a = Tensor::matrix(1, 2, vec![3.0, 4.0]);
        let n = l2_normalize_rows(&a);
        assert!((n.data[0] - 0.6).abs() < 1e-12);
        assert!((n.data[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn l2_normalize_zero_row_stays_zero() {
        let a = Tensor::matrix(1, 3, vec![0.0; 3]);
        let n = l2_normalize_rows(&a);
        assert!(n.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_nt_matches_explicit_transpose() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::matrix(2, 3, vec![1.0, 0.0, 1.0, 0.0, 2.0, 0.0]);
        let c = matmul_nt(&a, &b).unwrap();
        assert_eq!(c.shape, vec![2, 2]);
        assert_eq!(c.data, vec![4.0, 4.0, 10.0, 10.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -5.0, 0.0, 5.0]);
        let s = softmax_rows(&a);
        for i in 0..2 {
            let sum: f64 = s.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
