//! Dense feedforward networks with exact analytic gradients.

mod gradcheck;
mod layer;
mod loss;

pub use gradcheck::{finite_diff_grad, relative_error};
pub use layer::{layer_backward, layer_forward, LayerKind, LayerSpec, LayerState};
pub use loss::{loss_grad, loss_value, LossKind, Target};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Checks that every layer is valid and consecutive dims chain.
pub fn validate_layers(layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Config("network has no layers".into()));
    }
    for spec in layers {
        spec.validate()?;
    }
    for (l, pair) in layers.windows(2).enumerate() {
        if pair[0].out_dim != pair[1].in_dim {
            return Err(Error::Config(format!(
                "layer {} outputs {} but layer {} expects {}",
                l + 1,
                pair[0].out_dim,
                l + 2,
                pair[1].in_dim
            )));
        }
    }
    Ok(())
}

/// Initial parameters for every layer, a pure function of `seed`.
pub fn init_params<T: Scalar>(layers: &[LayerSpec], seed: u64) -> Vec<LayerState<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    layers.iter().map(|spec| LayerState::init(spec, &mut rng)).collect()
}

/// Runs a stack of layers, returning the output and one intermediate per layer.
pub fn forward<T: Scalar>(
    layers: &[LayerSpec],
    states: &[LayerState<T>],
    input: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    if layers.len() != states.len() {
        return Err(Error::Dimension(format!(
            "{} layer specs but {} states",
            layers.len(),
            states.len()
        )));
    }
    let mut intermediates = Vec::with_capacity(layers.len());
    let mut z = input.clone();
    for (spec, state) in layers.iter().zip(states) {
        let (out, inter) = layer_forward(spec, state, &z)?;
        intermediates.push(inter);
        z = out;
    }
    Ok((z, intermediates))
}

/// Backpropagates `upstream` through a stack of layers whose forward produced
/// `intermediates`. Returns per-layer parameter gradients and the input gradient.
pub fn backward<T: Scalar>(
    layers: &[LayerSpec],
    states: &[LayerState<T>],
    intermediates: &[Tensor<T>],
    upstream: Tensor<T>,
) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
    if intermediates.len() != layers.len() || states.len() != layers.len() {
        return Err(Error::Dimension(format!(
            "{} layers, {} states, {} intermediates",
            layers.len(),
            states.len(),
            intermediates.len()
        )));
    }
    let mut grads = vec![Tensor::empty(); layers.len()];
    let mut g = upstream;
    for l in (0..layers.len()).rev() {
        let (dp, dx) = layer_backward(&layers[l], &states[l], &intermediates[l], &g)?;
        grads[l] = dp;
        g = dx;
    }
    Ok((grads, g))
}

/// Stored forward computation of a whole network.
#[derive(Debug, Clone)]
pub struct NetContext<T> {
    pub intermediates: Vec<Tensor<T>>,
    pub output: Tensor<T>,
}

/// Mini-batch loss and the stored computation needed by [`net_backward`].
pub fn net_forward<T: Scalar>(
    layers: &[LayerSpec],
    states: &[LayerState<T>],
    input: &Tensor<T>,
    loss: LossKind,
    target: &Target<T>,
) -> Result<(T, NetContext<T>)> {
    let (output, intermediates) = forward(layers, states, input)?;
    let value = loss_value(loss, &output, target)?;
    if !value.is_finite() {
        return Err(Error::Divergence(format!("non-finite loss {value}")));
    }
    Ok((
        value,
        NetContext {
            intermediates,
            output,
        },
    ))
}

pub fn net_backward<T: Scalar>(
    layers: &[LayerSpec],
    states: &[LayerState<T>],
    ctx: &NetContext<T>,
    loss: LossKind,
    target: &Target<T>,
) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
    let upstream = loss_grad(loss, &ctx.output, target)?;
    backward(layers, states, &ctx.intermediates, upstream)
}

pub fn param_count(layers: &[LayerSpec]) -> usize {
    layers.iter().map(LayerSpec::param_count).sum()
}

/// Concatenated parameters as `f64`, in layer order.
pub fn flatten_params<T: Scalar>(states: &[LayerState<T>]) -> Vec<f64> {
    states.iter().flat_map(|s| s.params.to_f64()).collect()
}

/// Inverse of [`flatten_params`].
pub fn unflatten_params<T: Scalar>(layers: &[LayerSpec], flat: &[f64]) -> Result<Vec<LayerState<T>>> {
    if flat.len() != param_count(layers) {
        return Err(Error::Dimension(format!(
            "{} values for {} parameters",
            flat.len(),
            param_count(layers)
        )));
    }
    let mut offset = 0;
    layers
        .iter()
        .map(|spec| {
            let n = spec.param_count();
            let values = flat[offset..offset + n].iter().map(|&v| T::of(v)).collect();
            offset += n;
            LayerState::new(spec, values)
        })
        .collect()
}
