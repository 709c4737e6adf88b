//! Minimal dense linear algebra, activations, losses, initialization, an
//! Adam optimizer, and a finite-difference gradient oracle. Everything
//! else in the crate builds on this module.

mod adam;
mod batchnorm;
mod gradcheck;
mod init;
mod matrix;
mod ops;

pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{
    batch_normalize, bn_backward, bn_forward_eval, bn_forward_train, BnCache, Mode,
    RunningMoments, BN_EPSILON, BN_MOMENTUM,
};
pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use init::{init_params, zero_bias};
pub use matrix::{dot, Matrix, Param};
pub use ops::{
    affine, relu, relu_inplace, relu_mask, relu_slice, softmax, softmax_cross_entropy,
    softmax_slice,
};
