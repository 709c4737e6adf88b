//! Central finite-difference gradient oracle.
//!
//! Lives in the library (not test code) because model-level gradient
//! checks and the CLI's diagnostics both use it; every analytic backward
//! pass in the crate is validated against this routine.

/// Central differences `(f(t + h) - f(t - h)) / 2h` per coordinate.
///
/// `params` is restored to its original values before returning.
pub fn finite_diff_grad<F>(params: &mut [f64], step: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let original = params[i];
        params[i] = original + step;
        let plus = f(params);
        params[i] = original - step;
        let minus = f(params);
        params[i] = original;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Largest relative error between an analytic and a numeric gradient.
///
/// The denominator is floored at 1e-4 so that entries whose true gradient
/// is zero compare against finite-difference noise (~1e-10 for unit-scale
/// objectives) absolutely instead of blowing up the ratio.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let mut theta = vec![3.0];
        let g = finite_diff_grad(&mut theta, 1e-5, |t| t[0] * t[0]);
        assert!((g[0] - 6.0).abs() < 1e-6);
        assert_eq!(theta[0], 3.0);
    }

    #[test]
    fn linear_is_exact_for_any_step() {
        // Power-of-two steps keep the perturbed coordinates exactly
        // representable, so a linear objective differentiates exactly.
        for h in [0.25, 1.0, 4.0] {
            let mut theta = vec![2.0, -7.0];
            let g = finite_diff_grad(&mut theta, h, |t| 3.0 * t[0] - 0.5 * t[1] + 4.0);
            assert!((g[0] - 3.0).abs() < 1e-12, "h={h}");
            assert!((g[1] + 0.5).abs() < 1e-12, "h={h}");
        }
    }
}
