//! Adaptive moment-based first-order optimizer.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Param};

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: step counter plus per-parameter first/second moment
/// accumulators, lazily sized from the first `step` call.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<(Matrix, Matrix)>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update to every parameter and zeroes the
    /// gradients afterwards. Non-finite gradients abort before any
    /// parameter is touched.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        for p in params.iter() {
            if !p.grad.is_finite() {
                return Err(Error::NonFiniteGrad(p.name.clone()));
            }
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| {
                    (
                        Matrix::zeros(p.value.rows(), p.value.cols()),
                        Matrix::zeros(p.value.rows(), p.value.cols()),
                    )
                })
                .collect();
        }
        assert_eq!(
            self.moments.len(),
            params.len(),
            "optimizer state does not match parameter set"
        );
        self.step += 1;
        let t = self.step as f64;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bias1 = 1.0 - beta1.powf(t);
        let bias2 = 1.0 - beta2.powf(t);
        for (p, (m, v)) in params.iter_mut().zip(&mut self.moments) {
            assert!(
                p.value.same_shape(m),
                "optimizer accumulator shape drifted for {}",
                p.name
            );
            let g = p.grad.data();
            let mdat = m.data_mut();
            let vdat = v.data_mut();
            let wdat = p.value.data_mut();
            for i in 0..g.len() {
                mdat[i] = beta1 * mdat[i] + (1.0 - beta1) * g[i];
                vdat[i] = beta2 * vdat[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = mdat[i] / bias1;
                let v_hat = vdat[i] / bias2;
                wdat[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(w: f64) -> Param {
        Param::new("w", Matrix::from_vec(1, 1, vec![w]).unwrap())
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = scalar_param(1.5);
        let mut state = AdamState::new(AdamConfig::default());
        state.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value.get(0, 0), 1.5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar_param(1.0);
        p.grad.set(0, 0, 6.0);
        let mut state = AdamState::new(AdamConfig::default());
        state.step(&mut [&mut p]).unwrap();
        // Bias-corrected first step is lr * g / (|g| + eps) ~= lr * sign(g).
        let moved = 1.0 - p.value.get(0, 0);
        assert!((moved - 1e-3).abs() < 1e-9, "moved {moved}");
        // Gradient zeroed afterwards.
        assert_eq!(p.grad.get(0, 0), 0.0);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut p = scalar_param(1.0);
        let mut state = AdamState::new(AdamConfig {
            learning_rate: 1e-2,
            ..AdamConfig::default()
        });
        for _ in 0..200 {
            let w = p.value.get(0, 0);
            p.grad.set(0, 0, 2.0 * w);
            state.step(&mut [&mut p]).unwrap();
        }
        assert!(p.value.get(0, 0).abs() < 0.1);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut p = scalar_param(0.0);
        p.grad.set(0, 0, f64::NAN);
        let mut state = AdamState::new(AdamConfig::default());
        match state.step(&mut [&mut p]) {
            Err(Error::NonFiniteGrad(name)) => assert_eq!(name, "w"),
            other => panic!("expected NonFiniteGrad, got {other:?}"),
        }
    }
}
