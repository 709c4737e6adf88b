//! Parameter initialization.

use rand::Rng;

use crate::numerics::Matrix;

/// Scaled-uniform weight init: entries drawn from `+-sqrt(6 / fan_in)`.
///
/// Appropriate for ReLU stacks; the bound shrinks with fan-in so
/// activations keep a stable scale through deep compositions.
pub fn init_params<R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Matrix {
    assert!(fan_in > 0, "fan_in must be positive");
    let bound = (6.0 / fan_in as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.random_range(-bound..bound);
    }
    m
}

/// Biases start at zero, stored as a `1 x n` row.
pub fn zero_bias(n: usize) -> Matrix {
    Matrix::zeros(1, n)
}
