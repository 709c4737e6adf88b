//! Batch normalization over the row (batch) axis of a matrix.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Exponential running estimates of per-feature mean and variance.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningMoments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningMoments {
    pub fn new(dim: usize) -> Self {
        RunningMoments {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn update(&mut self, batch_mean: &[f64], batch_var: &[f64]) {
        for (m, &bm) in self.mean.iter_mut().zip(batch_mean) {
            *m = BN_MOMENTUM * *m + (1.0 - BN_MOMENTUM) * bm;
        }
        for (v, &bv) in self.var.iter_mut().zip(batch_var) {
            *v = BN_MOMENTUM * *v + (1.0 - BN_MOMENTUM) * bv;
        }
    }
}

/// Everything the backward pass needs from a train-mode forward.
#[derive(Clone, Debug)]
pub struct BnCache {
    pub x_hat: Matrix,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

fn check_dims(x: &Matrix, gamma: &[f64], beta: &[f64]) -> Result<()> {
    if gamma.len() != x.cols() || beta.len() != x.cols() {
        return Err(Error::invalid(format!(
            "batch norm gamma/beta lengths {}/{} do not match feature dimension {}",
            gamma.len(),
            beta.len(),
            x.cols()
        )));
    }
    Ok(())
}

/// Train-mode normalization by batch statistics. Pure: running moments are
/// not touched; apply `RunningMoments::update` with the returned cache's
/// statistics from the training loop.
pub fn bn_forward_train(x: &Matrix, gamma: &[f64], beta: &[f64]) -> Result<(Matrix, BnCache)> {
    check_dims(x, gamma, beta)?;
    let n = x.rows();
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let cols = x.cols();
    let inv_n = 1.0 / n as f64;
    let mut mean = vec![0.0; cols];
    for r in 0..n {
        for (m, &v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m *= inv_n;
    }
    let mut var = vec![0.0; cols];
    for r in 0..n {
        for (c, &v) in x.row(r).iter().enumerate() {
            let d = v - mean[c];
            var[c] += d * d;
        }
    }
    for v in &mut var {
        *v *= inv_n;
    }
    let mut x_hat = Matrix::zeros(n, cols);
    let mut out = Matrix::zeros(n, cols);
    for r in 0..n {
        for c in 0..cols {
            let h = (x.get(r, c) - mean[c]) / (var[c] + BN_EPSILON).sqrt();
            x_hat.set(r, c, h);
            out.set(r, c, gamma[c] * h + beta[c]);
        }
    }
    Ok((
        out,
        BnCache {
            x_hat,
            batch_mean: mean,
            batch_var: var,
        },
    ))
}

/// Eval-mode normalization by stored running moments.
pub fn bn_forward_eval(
    x: &Matrix,
    gamma: &[f64],
    beta: &[f64],
    moments: &RunningMoments,
) -> Result<Matrix> {
    check_dims(x, gamma, beta)?;
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let h = (x.get(r, c) - moments.mean[c]) / (moments.var[c] + BN_EPSILON).sqrt();
            out.set(r, c, gamma[c] * h + beta[c]);
        }
    }
    Ok(out)
}

/// The combined operation: train mode normalizes by batch statistics and
/// folds them into the running moments; eval mode normalizes by the stored
/// moments.
pub fn batch_normalize(
    x: &Matrix,
    gamma: &[f64],
    beta: &[f64],
    moments: &mut RunningMoments,
    mode: Mode,
) -> Result<Matrix> {
    match mode {
        Mode::Train => {
            let (out, cache) = bn_forward_train(x, gamma, beta)?;
            moments.update(&cache.batch_mean, &cache.batch_var);
            Ok(out)
        }
        Mode::Eval => bn_forward_eval(x, gamma, beta, moments),
    }
}

/// Backward through a train-mode normalization.
///
/// Returns `(dx, dgamma, dbeta)`.
pub fn bn_backward(dy: &Matrix, gamma: &[f64], cache: &BnCache) -> (Matrix, Vec<f64>, Vec<f64>) {
    let n = dy.rows();
    let cols = dy.cols();
    let inv_n = 1.0 / n as f64;
    let mut dgamma = vec![0.0; cols];
    let mut dbeta = vec![0.0; cols];
    for r in 0..n {
        for c in 0..cols {
            let g = dy.get(r, c);
            dgamma[c] += g * cache.x_hat.get(r, c);
            dbeta[c] += g;
        }
    }
    // dx = (gamma / sqrt(var + eps)) * (dy - mean(dy) - x_hat * mean(dy * x_hat))
    let mut dx = Matrix::zeros(n, cols);
    for c in 0..cols {
        let inv_std = 1.0 / (cache.batch_var[c] + BN_EPSILON).sqrt();
        let mean_dy = dbeta[c] * inv_n;
        let mean_dy_xhat = dgamma[c] * inv_n;
        for r in 0..n {
            let v = gamma[c]
                * inv_std
                * (dy.get(r, c) - mean_dy - cache.x_hat.get(r, c) * mean_dy_xhat);
            dx.set(r, c, v);
        }
    }
    (dx, dgamma, dbeta)
}
