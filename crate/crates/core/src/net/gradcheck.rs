//! Central finite differences, used as an independent check of backward passes.

use super::{forward, loss_value, LayerSpec, LayerState, LossKind, Target};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Central-difference estimate `(f(θ+h) - f(θ-h)) / 2h` for every parameter.
pub fn finite_diff_grad<T: Scalar>(
    layers: &[LayerSpec],
    states: &[LayerState<T>],
    input: &Tensor<T>,
    loss: LossKind,
    target: &Target<T>,
    step: T,
) -> Result<Vec<Tensor<T>>> {
    if step <= T::zero() {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {step}")));
    }
    let eval = |states: &[LayerState<T>]| -> Result<T> {
        let (out, _) = forward(layers, states, input)?;
        loss_value(loss, &out, target)
    };
    let mut work = states.to_vec();
    let mut grads = Vec::with_capacity(layers.len());
    for l in 0..layers.len() {
        let mut g = Vec::with_capacity(work[l].params.len());
        for i in 0..work[l].params.len() {
            let original = work[l].params.data()[i];
            work[l].params.data_mut()[i] = original + step;
            let plus = eval(&work)?;
            work[l].params.data_mut()[i] = original - step;
            let minus = eval(&work)?;
            work[l].params.data_mut()[i] = original;
            g.push((plus - minus) / (step + step));
        }
        grads.push(Tensor::vector(g));
    }
    Ok(grads)
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|)` over all entries; zero
/// when both are zero.
pub fn relative_error<T: Scalar>(a: &[Tensor<T>], b: &[Tensor<T>]) -> f64 {
    let (mut diff, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        for (&u, &v) in x.data().iter().zip(y.data()) {
            let (u, v) = (u.to_f64_lossy(), v.to_f64_lossy());
            diff += (u - v) * (u - v);
            na += u * u;
            nb += v * v;
        }
    }
    let scale = na.sqrt().max(nb.sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}
