use crate::error::{Error, Result};
use crate::net::LayerState;
use crate::scalar::Scalar;

use super::Accumulator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig<T> {
    /// Momentum coefficient `μ ∈ [0, 1)`.
    pub momentum: T,
    /// Coupled weight decay `λ >= 0`, added as `λθ` to the averaged gradient.
    pub weight_decay: T,
}

impl<T: Scalar> SgdConfig<T> {
    pub fn plain() -> Self {
        Self {
            momentum: T::zero(),
            weight_decay: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.momentum >= T::zero() && self.momentum < T::one()) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= T::zero()) {
            return Err(Error::Config(format!("weight decay {} is negative", self.weight_decay)));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for SgdConfig<T> {
    fn default() -> Self {
        Self::plain()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome<T> {
    /// Squared norm of the averaged gradient `grad_sum / M` (before decay).
    pub grad_sq_norm: T,
}

/// Applies one accumulated update to `params` (flat, layer order):
///
/// ```text
/// g = grad_sum / M + λ θ
/// v = μ v + g            (v = g when μ = 0)
/// θ = θ - γ v
/// ```
///
/// Resets the accumulator. `velocity` is resized lazily on first use.
pub fn ga_update<T: Scalar>(
    params: &mut [LayerState<T>],
    acc: &mut Accumulator<T>,
    lr: T,
    sgd: &SgdConfig<T>,
    velocity: &mut Vec<T>,
) -> Result<UpdateOutcome<T>> {
    if !acc.is_full() {
        return Err(Error::Protocol(format!(
            "update requested after {} of {} slots",
            acc.slots(),
            acc.capacity()
        )));
    }
    let total: usize = params.iter().map(|p| p.params.len()).sum();
    if total != acc.grad_sum().len() {
        return Err(Error::Dimension(format!(
            "{} params but accumulator holds {}",
            total,
            acc.grad_sum().len()
        )));
    }
    let avg = acc.averaged();
    let grad_sq_norm = avg.iter().fold(T::zero(), |s, &g| s + g * g);
    let use_momentum = sgd.momentum != T::zero();
    if use_momentum && velocity.len() != total {
        *velocity = vec![T::zero(); total];
    }

    let flat = params.iter_mut().flat_map(|p| p.params.data_mut().iter_mut());
    for (i, theta) in flat.enumerate() {
        let mut g = avg[i];
        if sgd.weight_decay != T::zero() {
            g = g + sgd.weight_decay * *theta;
        }
        let step = if use_momentum {
            velocity[i] = sgd.momentum * velocity[i] + g;
            velocity[i]
        } else {
            g
        };
        *theta = *theta - lr * step;
    }
    acc.reset();

    let finite = params.iter().all(|p| p.params.all_finite());
    if !finite || !grad_sq_norm.is_finite() {
        return Err(Error::Divergence("non-finite parameters after update".into()));
    }
    Ok(UpdateOutcome { grad_sq_norm })
}
