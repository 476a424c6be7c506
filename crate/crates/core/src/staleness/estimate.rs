//! Empirical estimates of the constants the bounds take as assumptions.
//! These are trajectory statistics, not certified constants.

use crate::scalar::Scalar;

/// Largest observed squared gradient norm; an empirical stand-in for `A`.
pub fn estimate_grad_bound<T: Scalar>(grad_sq_norms: &[T]) -> Option<T> {
    grad_sq_norms.iter().copied().reduce(T::max)
}

/// Largest secant ratio `‖g_i - g_{i-1}‖ / ‖θ_i - θ_{i-1}‖` along a trajectory;
/// an empirical lower estimate of `L`. Steps with no parameter change are skipped.
pub fn estimate_lipschitz_secant<T: Scalar>(params: &[Vec<T>], grads: &[Vec<T>]) -> Option<T> {
    let dist = |a: &[T], b: &[T]| {
        a.iter()
            .zip(b)
            .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
            .sqrt()
    };
    let mut best: Option<T> = None;
    for i in 1..params.len().min(grads.len()) {
        let dp = dist(&params[i], &params[i - 1]);
        if dp == T::zero() {
            continue;
        }
        let ratio = dist(&grads[i], &grads[i - 1]) / dp;
        best = Some(best.map_or(ratio, |b| b.max(ratio)));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_secant_recovers_curvature() {
        // f = 3/2 x^2 has gradient 3x, so every secant ratio equals 3
        let params: Vec<Vec<f64>> = [1.0, 0.5, 0.2, 0.2, -0.4].iter().map(|&x| vec![x]).collect();
        let grads: Vec<Vec<f64>> = params.iter().map(|p| vec![3.0 * p[0]]).collect();
        let l = estimate_lipschitz_secant(&params, &grads).unwrap();
        assert!((l - 3.0).abs() < 1e-12);
    }

    #[test]
    fn grad_bound_is_max() {
        assert_eq!(estimate_grad_bound(&[1.0, 4.0, 2.0]), Some(4.0));
        assert_eq!(estimate_grad_bound::<f64>(&[]), None);
    }
}
