//! Core batched operations: affine maps, ReLU, and softmax cross-entropy.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// `y = x W^T + b` for a batch `x` (one sample per row).
///
/// `W` is `out_dim x in_dim`, `b` has `out_dim` entries.
pub fn affine(w: &Matrix, x: &Matrix, b: &[f64]) -> Result<Matrix> {
    if x.cols() != w.cols() {
        return Err(Error::ShapeMismatch {
            op: "affine",
            left_name: "weights",
            left_rows: w.rows(),
            left_cols: w.cols(),
            right_name: "input batch",
            right_rows: x.rows(),
            right_cols: x.cols(),
        });
    }
    if b.len() != w.rows() {
        return Err(Error::ShapeMismatch {
            op: "affine",
            left_name: "weights",
            left_rows: w.rows(),
            left_cols: w.cols(),
            right_name: "bias",
            right_rows: 1,
            right_cols: b.len(),
        });
    }
    let mut y = x.matmul_nt(w);
    for r in 0..y.rows() {
        for (slot, bv) in y.row_mut(r).iter_mut().zip(b) {
            *slot += bv;
        }
    }
    Ok(y)
}

/// Elementwise `max(a, 0)`.
pub fn relu(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    relu_inplace(&mut out);
    out
}

pub fn relu_inplace(x: &mut Matrix) {
    for v in x.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

pub fn relu_slice(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Gates an upstream gradient by the ReLU activation pattern: entries where
/// the forward output was zero get zero gradient.
pub fn relu_mask(dy: &mut [f64], y: &[f64]) {
    debug_assert_eq!(dy.len(), y.len());
    for (g, &v) in dy.iter_mut().zip(y) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Row-wise softmax with max-subtraction for stability.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_slice(out.row_mut(r));
    }
    out
}

pub fn softmax_slice(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean negative log-likelihood over the batch plus the logit gradient
/// `(softmax - one_hot) / batch`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() {
        return Err(Error::invalid(format!(
            "{} labels for a batch of {}",
            labels.len(),
            logits.rows()
        )));
    }
    let classes = logits.cols();
    for &l in labels {
        if l >= classes {
            return Err(Error::LabelOutOfRange {
                label: l,
                classes,
            });
        }
    }
    let batch = logits.rows() as f64;
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = grad.row_mut(r);
        loss -= row[label].ln();
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v /= batch;
        }
    }
    Ok((loss / batch, grad))
}
