//! Convergence-bound calculators for pipelined training with accumulation.
//!
//! All bounds share the staleness factor `1 + (1/M) Σ_k d̄_k`; `A` bounds the
//! squared stochastic-gradient norm and `L` is the gradient Lipschitz constant.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs<T> {
    /// Learning rate `γ` (or `γ_s` for the one-step bound).
    pub lr: T,
    /// Squared full-gradient norm `‖ḡ‖²` at the current parameters.
    pub grad_norm_sq: T,
    /// Bound `A` on the squared stochastic-gradient norm.
    pub grad_bound: T,
    /// Lipschitz constant `L` of the gradient.
    pub lipschitz: T,
    /// Accumulation steps `M`.
    pub accumulation: u64,
    /// `Σ_k d̄_k`.
    pub staleness_sum: T,
    /// Total number of updates `S`.
    pub updates: u64,
    /// Initial optimality gap `f(θ⁰) - f(θ*)`.
    pub initial_gap: T,
    /// Scale factor `ε` of the constant learning rate.
    pub epsilon: T,
}

impl<T: Scalar> BoundInputs<T> {
    fn check_constants(&self) -> Result<()> {
        if !(self.grad_bound > T::zero()) || !(self.lipschitz > T::zero()) {
            return Err(Error::Domain(format!(
                "A and L must be positive, got A={} L={}",
                self.grad_bound, self.lipschitz
            )));
        }
        if self.accumulation == 0 {
            return Err(Error::Domain("accumulation steps must be at least 1".into()));
        }
        if self.staleness_sum < T::zero() {
            return Err(Error::Domain("staleness sum must be nonnegative".into()));
        }
        Ok(())
    }

    fn check_lr(&self, lr: T) -> Result<()> {
        if lr < T::zero() || self.lipschitz * lr > T::one() {
            return Err(Error::Domain(format!(
                "learning rate {lr} violates 0 <= L*lr <= 1 with L={}",
                self.lipschitz
            )));
        }
        Ok(())
    }

    fn m(&self) -> T {
        T::of(self.accumulation as f64)
    }
}

/// `1 + (1/M) Σ_k d̄_k`.
pub fn staleness_factor<T: Scalar>(accumulation: u64, staleness_sum: T) -> T {
    T::one() + staleness_sum / T::of(accumulation as f64)
}

/// Upper bound on the expected one-update change of the loss:
/// `-(γ/2)‖ḡ‖² + γ² A L (1 + Σd̄/M) / M`. Requires `L·γ <= 1`.
pub fn one_step_descent_bound<T: Scalar>(inputs: &BoundInputs<T>) -> Result<T> {
    inputs.check_constants()?;
    inputs.check_lr(inputs.lr)?;
    let lr = inputs.lr;
    let factor = staleness_factor(inputs.accumulation, inputs.staleness_sum);
    let descent = lr / T::of(2.0) * inputs.grad_norm_sq;
    let penalty = lr * lr * inputs.grad_bound * inputs.lipschitz * factor / inputs.m();
    Ok(-descent + penalty)
}

/// Bound on the `γ`-weighted average of `‖ḡ‖²` over a schedule of `S` steps:
/// `2 gap / T_S + 2 A L (1 + Σd̄/M) Σγ² / (M T_S)` with `T_S = Σγ`.
pub fn ergodic_gradient_bound<T: Scalar>(inputs: &BoundInputs<T>, schedule: &[T]) -> Result<T> {
    inputs.check_constants()?;
    let first = *schedule
        .first()
        .ok_or_else(|| Error::Domain("learning-rate schedule is empty".into()))?;
    inputs.check_lr(first)?;
    if schedule.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Domain("learning-rate schedule must be non-increasing".into()));
    }
    if schedule.iter().any(|&g| g <= T::zero()) {
        return Err(Error::Domain("learning rates must be positive".into()));
    }
    let (total, total_sq) = schedule
        .iter()
        .fold((T::zero(), T::zero()), |(t, q), &g| (t + g, q + g * g));
    let two = T::of(2.0);
    let factor = staleness_factor(inputs.accumulation, inputs.staleness_sum);
    Ok(two * inputs.initial_gap / total
        + two * inputs.grad_bound * inputs.lipschitz * factor * total_sq / (inputs.m() * total))
}

/// Constant learning rate balancing the two terms of the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantLr<T> {
    pub lr: T,
    /// Whether `L·γ <= 1` holds for this rate.
    pub admissible: bool,
}

fn check_constant_inputs<T: Scalar>(inputs: &BoundInputs<T>) -> Result<()> {
    inputs.check_constants()?;
    if inputs.updates == 0 {
        return Err(Error::Domain("number of updates must be at least 1".into()));
    }
    if !(inputs.initial_gap > T::zero()) || !(inputs.epsilon > T::zero()) {
        return Err(Error::Domain(format!(
            "initial gap and epsilon must be positive, got {} and {}",
            inputs.initial_gap, inputs.epsilon
        )));
    }
    Ok(())
}

/// `γ = ε sqrt(M gap / (S A L (1 + Σd̄/M)))`.
pub fn constant_lr<T: Scalar>(inputs: &BoundInputs<T>) -> Result<ConstantLr<T>> {
    check_constant_inputs(inputs)?;
    let factor = staleness_factor(inputs.accumulation, inputs.staleness_sum);
    let s = T::of(inputs.updates as f64);
    let lr = inputs.epsilon
        * (inputs.m() * inputs.initial_gap
            / (s * inputs.grad_bound * inputs.lipschitz * factor))
            .sqrt();
    Ok(ConstantLr {
        lr,
        admissible: inputs.lipschitz * lr <= T::one(),
    })
}

/// `((2 + 2ε²)/ε) sqrt(A L gap (1 + Σd̄/M) / (M S))`, a bound on the smallest
/// expected squared gradient norm under [`constant_lr`].
pub fn constant_lr_gradient_bound<T: Scalar>(inputs: &BoundInputs<T>) -> Result<T> {
    check_constant_inputs(inputs)?;
    let two = T::of(2.0);
    let eps = inputs.epsilon;
    let factor = staleness_factor(inputs.accumulation, inputs.staleness_sum);
    let s = T::of(inputs.updates as f64);
    Ok((two + two * eps * eps) / eps
        * (inputs.grad_bound * inputs.lipschitz * inputs.initial_gap * factor / (inputs.m() * s))
            .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> BoundInputs<f64> {
        BoundInputs {
            lr: 0.1,
            grad_norm_sq: 4.0,
            grad_bound: 1.0,
            lipschitz: 1.0,
            accumulation: 2,
            staleness_sum: 3.0,
            updates: 4,
            initial_gap: 1.0,
            epsilon: 1.0,
        }
    }

    #[test]
    fn one_step_substitution() {
        assert_eq!(one_step_descent_bound(&base()).unwrap(), -0.1875);
        let zero = BoundInputs {
            lr: 0.0,
            grad_norm_sq: 0.0,
            ..base()
        };
        assert_eq!(one_step_descent_bound(&zero).unwrap(), 0.0);
    }

    #[test]
    fn one_step_penalty_shrinks_with_accumulation() {
        let mut prev = f64::INFINITY;
        for m in 1..20 {
            let inputs = BoundInputs {
                grad_norm_sq: 0.0,
                accumulation: m,
                ..base()
            };
            let v = one_step_descent_bound(&inputs).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn rejects_large_lr() {
        let inputs = BoundInputs { lr: 2.0, ..base() };
        assert!(one_step_descent_bound(&inputs).is_err());
    }

    #[test]
    fn ergodic_constant_schedule() {
        let inputs = BoundInputs {
            accumulation: 1,
            staleness_sum: 0.0,
            ..base()
        };
        let v = ergodic_gradient_bound(&inputs, &[0.1; 10]).unwrap();
        assert!((v - 2.2).abs() < 1e-12);
        assert!(ergodic_gradient_bound(&inputs, &[]).is_err());
        assert!(ergodic_gradient_bound(&inputs, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn ergodic_second_term_shrinks_with_accumulation() {
        // zero gap isolates the staleness term
        let at = |m: u64| {
            let inputs = BoundInputs {
                accumulation: m,
                initial_gap: 0.0,
                ..base()
            };
            ergodic_gradient_bound(&inputs, &[0.1; 10]).unwrap()
        };
        assert!(at(2) < at(1));
        assert!(at(4) < at(2));
    }

    #[test]
    fn constant_lr_examples() {
        let inputs = BoundInputs {
            accumulation: 1,
            staleness_sum: 0.0,
            updates: 4,
            ..base()
        };
        let c = constant_lr(&inputs).unwrap();
        assert_eq!(c.lr, 0.5);
        assert!(c.admissible);
        assert_eq!(constant_lr_gradient_bound(&inputs).unwrap(), 2.0);

        let quad = BoundInputs { updates: 16, ..inputs };
        assert_eq!(constant_lr(&quad).unwrap().lr, 0.25);
        assert_eq!(constant_lr_gradient_bound(&quad).unwrap(), 1.0);

        let big = BoundInputs {
            epsilon: 10.0,
            updates: 1,
            ..inputs
        };
        assert!(!constant_lr(&big).unwrap().admissible);
    }

    #[test]
    fn constant_lr_vanishes_with_staleness() {
        let mut prev = f64::INFINITY;
        for exp in 0..8 {
            let inputs = BoundInputs {
                staleness_sum: 10f64.powi(exp),
                ..base()
            };
            let lr = constant_lr(&inputs).unwrap().lr;
            assert!(lr < prev);
            prev = lr;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn epsilon_one_minimizes_prefactor() {
        let at = |eps: f64| {
            constant_lr_gradient_bound(&BoundInputs {
                epsilon: eps,
                ..base()
            })
            .unwrap()
        };
        let best = at(1.0);
        for eps in [0.25, 0.5, 0.9, 1.1, 2.0, 4.0] {
            assert!(at(eps) > best);
        }
    }

    #[test]
    fn rejects_nonpositive_constants() {
        let inputs = BoundInputs {
            grad_bound: 0.0,
            ..base()
        };
        assert!(one_step_descent_bound(&inputs).is_err());
        let inputs = BoundInputs { updates: 0, ..base() };
        assert!(constant_lr(&inputs).is_err());
    }
}
