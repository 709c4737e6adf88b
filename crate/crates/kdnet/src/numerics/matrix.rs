//! Dense row-major `f64` matrices and learnable parameters.
//!
//! A `Matrix` doubles as a batch of row vectors (one sample per row), which
//! is the layout every forward/backward routine in the crate works in. A
//! bias or single vector is stored as a `1 x n` matrix.

use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data, validating length and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Matrix::from_vec(rows.len(), cols, rows.concat())
    }

    /// A `1 x n` row vector.
    pub fn row_vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Matrix::from_vec(1, n, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Frobenius norm; used in training diagnostics.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert!(
            self.same_shape(other),
            "add_assign shape mismatch: {:?} vs {:?}",
            self.shape(),
            other.shape()
        );
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self (m x k) * other^T (from n x k) -> m x n`.
    ///
    /// Both operands are traversed row-wise, so the inner product is over
    /// contiguous memory on both sides. Large products are split over rows
    /// of the output in parallel.
    pub fn matmul_nt(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.cols,
            "matmul_nt inner dimension mismatch: {:?} vs {:?}",
            self.shape(),
            other.shape()
        );
        let n = other.rows;
        let mut out = Matrix::zeros(self.rows, n);
        let work = self.rows * n * self.cols;
        if work < 32_768 {
            for r in 0..self.rows {
                let a = self.row(r);
                let out_row = out.row_mut(r);
                for (j, slot) in out_row.iter_mut().enumerate() {
                    *slot = dot(a, other.row(j));
                }
            }
        } else {
            let lhs = &*self;
            par::for_each_row(&mut out.data, n, |r, out_row| {
                let a = lhs.row(r);
                for (j, slot) in out_row.iter_mut().enumerate() {
                    *slot = dot(a, other.row(j));
                }
            });
        }
        out
    }

    /// `out = self * x` for a single vector.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, slot) in out.iter_mut().enumerate() {
            *slot = dot(self.row(r), x);
        }
    }

    /// `out += self^T * g`; used to push gradients to layer inputs.
    pub fn matvec_t_add(&self, g: &[f64], out: &mut [f64]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += gr * w;
            }
        }
    }

    /// `self += g * x^T` (outer product accumulation).
    pub fn outer_add(&mut self, g: &[f64], x: &[f64]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            for (slot, &xv) in self.row_mut(r).iter_mut().zip(x) {
                *slot += gr * xv;
            }
        }
    }
}

/// Unrolled dot product. Every matrix product in the crate funnels through
/// this one kernel, so alternative execution paths (per-sample vs batched)
/// produce bit-identical sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4 * 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < chunks {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut tail = 0.0;
    while i < n {
        tail += a[i] * b[i];
        i += 1;
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// A learnable tensor: value plus same-shaped gradient accumulator.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Param {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}
