//! Dense f64 matrices in row-major order.
//!
//! Everything the networks need is rank 2: feature matrices are
//! `rows = nodes`, `cols = channels`, vectors are `n x 1`, biases `1 x c`,
//! and scalars `1 x 1`. Matrix products are delegated to `matrixmultiply`,
//! which picks a SIMD kernel at runtime; all other kernels are simple loops.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: expected a scalar (1 x 1), got {shape:?}")]
    NotScalar {
        op: &'static str,
        shape: (usize, usize),
    },
    #[error("tensor dimensions must be nonzero, got {rows} x {cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("{op}: column range {start}..{end} out of bounds for width {cols}")]
    BadSlice {
        op: &'static str,
        start: usize,
        end: usize,
        cols: usize,
    },
    #[error("parameter store already bound to this tape")]
    StoreAlreadyBound,
    #[error("unknown parameter {name:?}")]
    UnknownParam { name: String },
    #[error("duplicate parameter {name:?}")]
    DuplicateParam { name: String },
    #[error("neighbour aggregation: adjacency covers {adj_rows} rows, input has {input_rows}")]
    AdjacencyMismatch { adj_rows: usize, input_rows: usize },
}

/// A dense row-major f64 matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        assert!(rows > 0 && cols > 0, "zero-sized tensor");
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        assert!(rows > 0 && cols > 0, "zero-sized tensor");
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(1, 1, vec![v])
    }

    /// Column vector `n x 1`.
    pub fn column(data: Vec<f64>) -> Tensor {
        let n = data.len();
        Tensor::from_vec(n, 1, data)
    }

    /// Row vector `1 x n`.
    pub fn row(data: Vec<f64>) -> Tensor {
        let n = data.len();
        Tensor::from_vec(1, n, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single element of a `1 x 1` tensor.
    pub fn item(&self) -> Result<f64, TensorError> {
        if self.rows == 1 && self.cols == 1 {
            Ok(self.data[0])
        } else {
            Err(TensorError::NotScalar {
                op: "item",
                shape: self.shape(),
            })
        }
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_assign_scaled(&mut self, rhs: &Tensor, s: f64) {
        debug_assert_eq!(self.shape(), rhs.shape());
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += s * b;
        }
    }
}

/// Output buffer for GEMM calls: allocated but intentionally not zeroed,
/// because `dgemm` with `beta = 0` writes every element before any read.
fn gemm_output(rows: usize, cols: usize) -> Tensor {
    let len = rows * cols;
    let mut data = Vec::with_capacity(len);
    // SAFETY: dgemm(beta=0) fully initialises all rows*cols elements below,
    // and the Vec is not read before that happens.
    #[allow(clippy::uninit_vec)]
    unsafe {
        data.set_len(len)
    };
    Tensor { rows, cols, data }
}

fn dgemm_raw(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
) {
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `A (m x k) * B (k x n)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    if a.cols != b.rows {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mut out = gemm_output(a.rows, b.cols);
    dgemm_raw(
        a.rows,
        a.cols,
        b.cols,
        &a.data,
        a.cols as isize,
        1,
        &b.data,
        b.cols as isize,
        1,
        &mut out.data,
    );
    Ok(out)
}

/// `A (m x k) * B^T` where `B` is stored as `n x k`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    if a.cols != b.cols {
        return Err(TensorError::ShapeMismatch {
            op: "matmul_nt",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mut out = gemm_output(a.rows, b.rows);
    dgemm_raw(
        a.rows,
        a.cols,
        b.rows,
        &a.data,
        a.cols as isize,
        1,
        &b.data,
        1,
        b.cols as isize,
        &mut out.data,
    );
    Ok(out)
}

/// `A^T * B` where `A` is stored as `k x m` and `B` as `k x n`.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    if a.rows != b.rows {
        return Err(TensorError::ShapeMismatch {
            op: "matmul_tn",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mut out = gemm_output(a.cols, b.cols);
    dgemm_raw(
        a.cols,
        a.rows,
        b.cols,
        &a.data,
        1,
        a.cols as isize,
        &b.data,
        b.cols as isize,
        1,
        &mut out.data,
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small_case() {
        // [[1,2],[3,4]] * [[1],[1]] = [[3],[7]]
        let a = Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::from_vec(2, 1, vec![1.0, 1.0]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_identity() {
        let a = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let eye = Tensor::from_vec(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(matmul(&a, &eye).unwrap(), a);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(2, 3);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "unhelpful message: {msg}");
    }

    #[test]
    fn transposed_variants_agree_with_explicit_transpose() {
        let a = Tensor::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]);
        let b = Tensor::from_vec(4, 3, (0..12).map(|i| i as f64 * 0.25 - 1.0).collect());
        let nt = matmul_nt(&a, &b).unwrap();
        let reference = matmul(&a, &b.transpose()).unwrap();
        assert_eq!(nt, reference);

        let c = Tensor::from_vec(2, 4, (0..8).map(|i| (i as f64).sin()).collect());
        let tn = matmul_tn(&a, &c).unwrap();
        let reference = matmul(&a.transpose(), &c).unwrap();
        assert_eq!(tn, reference);
    }

    #[test]
    fn transpose_round_trip() {
        let a = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(a.transpose().transpose(), a);
    }
}
