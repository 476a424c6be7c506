//! Layer specifications, parameter layout and per-layer forward/backward.
//!
//! Affine parameters are packed weight-then-bias in one flat tensor: the
//! weight matrix `W` of shape `(out_dim, in_dim)` in row-major order occupies
//! `[0, out_dim * in_dim)`, followed by the `out_dim` bias entries.
//!
//! Matrix products use a fixed loop order. For `y = W x + b` each output is
//! accumulated as `((W[o,0] x[0] + W[o,1] x[1]) + ...) + b[o]`. Batch sums in
//! the backward pass run over rows in ascending order.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Affine,
    Tanh,
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LayerSpec {
    pub fn affine(in_dim: usize, out_dim: usize) -> Self {
        Self {
            kind: LayerKind::Affine,
            in_dim,
            out_dim,
        }
    }

    pub fn tanh(dim: usize) -> Self {
        Self {
            kind: LayerKind::Tanh,
            in_dim: dim,
            out_dim: dim,
        }
    }

    pub fn relu(dim: usize) -> Self {
        Self {
            kind: LayerKind::Relu,
            in_dim: dim,
            out_dim: dim,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            kind: LayerKind::Identity,
            in_dim: dim,
            out_dim: dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LayerKind::Affine if self.in_dim == 0 || self.out_dim == 0 => Err(Error::Config(
                format!("affine layer needs positive dims, got {}->{}", self.in_dim, self.out_dim),
            )),
            LayerKind::Tanh | LayerKind::Relu | LayerKind::Identity
                if self.in_dim != self.out_dim =>
            {
                Err(Error::Config(format!(
                    "{:?} layer must preserve its dimension, got {}->{}",
                    self.kind, self.in_dim, self.out_dim
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            LayerKind::Affine => self.out_dim * self.in_dim + self.out_dim,
            _ => 0,
        }
    }
}

/// Flat parameter storage of one layer (see the module docs for the layout).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState<T> {
    pub params: Tensor<T>,
}

impl<T: Scalar> LayerState<T> {
    pub fn new(spec: &LayerSpec, params: Vec<T>) -> Result<Self> {
        if params.len() != spec.param_count() {
            return Err(Error::Dimension(format!(
                "{:?} {}->{} expects {} params, got {}",
                spec.kind,
                spec.in_dim,
                spec.out_dim,
                spec.param_count(),
                params.len()
            )));
        }
        Ok(Self {
            params: Tensor::vector(params),
        })
    }

    /// Affine layer from an explicit weight matrix (row-major, `out x in`) and bias.
    pub fn affine(spec: &LayerSpec, weight: &[T], bias: &[T]) -> Result<Self> {
        let mut params = weight.to_vec();
        params.extend_from_slice(bias);
        Self::new(spec, params)
    }

    pub fn empty() -> Self {
        Self {
            params: Tensor::vector(Vec::new()),
        }
    }

    /// Xavier-uniform weights, zero bias. Values are drawn as `f64` and cast,
    /// so the same seed yields the same network for every scalar type.
    pub fn init<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> Self {
        match spec.kind {
            LayerKind::Affine => {
                let limit = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
                let mut params = Vec::with_capacity(spec.param_count());
                for _ in 0..spec.out_dim * spec.in_dim {
                    params.push(T::of(rng.random_range(-limit..limit)));
                }
                params.extend(std::iter::repeat_n(T::zero(), spec.out_dim));
                Self {
                    params: Tensor::vector(params),
                }
            }
            _ => Self::empty(),
        }
    }
}

fn check_input<T: Scalar>(spec: &LayerSpec, input: &Tensor<T>) -> Result<()> {
    if input.last_dim() != spec.in_dim || input.is_empty() && spec.in_dim > 0 {
        return Err(Error::Dimension(format!(
            "{:?} layer expects trailing extent {}, got shape {:?}",
            spec.kind,
            spec.in_dim,
            input.shape()
        )));
    }
    Ok(())
}

fn check_params<T: Scalar>(spec: &LayerSpec, state: &LayerState<T>) -> Result<()> {
    if state.params.len() != spec.param_count() {
        return Err(Error::Dimension(format!(
            "{:?} layer expects {} params, got {}",
            spec.kind,
            spec.param_count(),
            state.params.len()
        )));
    }
    Ok(())
}

/// Returns `(output, intermediate)`. The intermediate is whatever the
/// backward pass needs besides the parameters: the input for affine and
/// relu layers, the output for tanh, nothing for identity.
pub fn layer_forward<T: Scalar>(
    spec: &LayerSpec,
    state: &LayerState<T>,
    input: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_input(spec, input)?;
    check_params(spec, state)?;
    match spec.kind {
        LayerKind::Affine => {
            let (n_in, n_out) = (spec.in_dim, spec.out_dim);
            let params = state.params.data();
            let (weight, bias) = params.split_at(n_out * n_in);
            let x = input.data();
            let mut out = Vec::with_capacity(input.rows() * n_out);
            for row in x.chunks_exact(n_in) {
                for o in 0..n_out {
                    let w_row = &weight[o * n_in..(o + 1) * n_in];
                    let mut acc = T::zero();
                    for i in 0..n_in {
                        acc = acc + w_row[i] * row[i];
                    }
                    out.push(acc + bias[o]);
                }
            }
            Ok((input.with_last_dim(n_out, out)?, input.clone()))
        }
        LayerKind::Tanh => {
            let out = input.data().iter().map(|x| x.tanh()).collect();
            let out = input.with_last_dim(spec.out_dim, out)?;
            Ok((out.clone(), out))
        }
        LayerKind::Relu => {
            let out = input
                .data()
                .iter()
                .map(|&x| if x > T::zero() { x } else { T::zero() })
                .collect();
            Ok((input.with_last_dim(spec.out_dim, out)?, input.clone()))
        }
        LayerKind::Identity => Ok((input.clone(), Tensor::empty())),
    }
}

/// Returns `(param_grad, input_grad)` for the stored forward computation.
pub fn layer_backward<T: Scalar>(
    spec: &LayerSpec,
    state: &LayerState<T>,
    intermediate: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if upstream.last_dim() != spec.out_dim {
        return Err(Error::Dimension(format!(
            "{:?} layer expects upstream trailing extent {}, got shape {:?}",
            spec.kind,
            spec.out_dim,
            upstream.shape()
        )));
    }
    check_params(spec, state)?;
    let same_len = |t: &Tensor<T>| {
        if t.len() != upstream.len() {
            Err(Error::Dimension(format!(
                "{:?} intermediate has {} values, upstream has {}",
                spec.kind,
                t.len(),
                upstream.len()
            )))
        } else {
            Ok(())
        }
    };
    match spec.kind {
        LayerKind::Affine => {
            let (n_in, n_out) = (spec.in_dim, spec.out_dim);
            if intermediate.last_dim() != n_in || intermediate.rows() != upstream.rows() {
                return Err(Error::Dimension(format!(
                    "affine intermediate shape {:?} does not match upstream {:?}",
                    intermediate.shape(),
                    upstream.shape()
                )));
            }
            let weight = &state.params.data()[..n_out * n_in];
            let x = intermediate.data();
            let dy = upstream.data();
            let rows = upstream.rows();

            let mut grad = vec![T::zero(); spec.param_count()];
            let (dw, db) = grad.split_at_mut(n_out * n_in);
            for b in 0..rows {
                let x_row = &x[b * n_in..(b + 1) * n_in];
                for o in 0..n_out {
                    let g = dy[b * n_out + o];
                    let dw_row = &mut dw[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        dw_row[i] = dw_row[i] + g * x_row[i];
                    }
                    db[o] = db[o] + g;
                }
            }

            let mut dx = Vec::with_capacity(rows * n_in);
            for b in 0..rows {
                let dy_row = &dy[b * n_out..(b + 1) * n_out];
                for i in 0..n_in {
                    let mut acc = T::zero();
                    for o in 0..n_out {
                        acc = acc + weight[o * n_in + i] * dy_row[o];
                    }
                    dx.push(acc);
                }
            }
            Ok((Tensor::vector(grad), intermediate.with_last_dim(n_in, dx)?))
        }
        LayerKind::Tanh => {
            same_len(intermediate)?;
            let dx = intermediate
                .data()
                .iter()
                .zip(upstream.data())
                .map(|(&y, &g)| g * (T::one() - y * y))
                .collect();
            Ok((Tensor::vector(Vec::new()), upstream.with_last_dim(spec.in_dim, dx)?))
        }
        LayerKind::Relu => {
            same_len(intermediate)?;
            // derivative at exactly zero is taken as zero
            let dx = intermediate
                .data()
                .iter()
                .zip(upstream.data())
                .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
                .collect();
            Ok((Tensor::vector(Vec::new()), upstream.with_last_dim(spec.in_dim, dx)?))
        }
        LayerKind::Identity => Ok((Tensor::vector(Vec::new()), upstream.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::vector(v.to_vec())
    }

    #[test]
    fn affine_scalar_forward() {
        let spec = LayerSpec::affine(1, 1);
        let state = LayerState::affine(&spec, &[2.0], &[0.0]).unwrap();
        let (y, _) = layer_forward(&spec, &state, &t(&[3.0])).unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn relu_forward_clamps() {
        let spec = LayerSpec::relu(2);
        let (y, _) = layer_forward(&spec, &LayerState::empty(), &t(&[-1.0, 2.0])).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0]);
    }

    #[test]
    fn affine_dot_plus_bias() {
        let spec = LayerSpec::affine(2, 1);
        let state = LayerState::affine(&spec, &[1.0, 1.0], &[1.0]).unwrap();
        let (y, _) = layer_forward(&spec, &state, &t(&[2.0, 3.0])).unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn affine_scalar_backward() {
        let spec = LayerSpec::affine(1, 1);
        let state = LayerState::affine(&spec, &[2.0], &[0.0]).unwrap();
        let (_, inter) = layer_forward(&spec, &state, &t(&[3.0])).unwrap();
        let (dp, dx) = layer_backward(&spec, &state, &inter, &t(&[1.0])).unwrap();
        assert_eq!(dp.data(), &[3.0, 1.0]);
        assert_eq!(dx.data(), &[2.0]);
    }

    #[test]
    fn relu_dead_unit_blocks_gradient() {
        let spec = LayerSpec::relu(1);
        let (_, inter) = layer_forward(&spec, &LayerState::empty(), &t(&[-1.0])).unwrap();
        let (_, dx) = layer_backward(&spec, &LayerState::empty(), &inter, &t(&[5.0])).unwrap();
        assert_eq!(dx.data(), &[0.0]);
        let (_, inter0) = layer_forward(&spec, &LayerState::empty(), &t(&[0.0])).unwrap();
        let (_, dx0) = layer_backward(&spec, &LayerState::empty(), &inter0, &t(&[5.0])).unwrap();
        assert_eq!(dx0.data(), &[0.0]);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let spec = LayerSpec::affine(2, 1);
        let state = LayerState::affine(&spec, &[1.0, 1.0], &[0.0]).unwrap();
        assert!(matches!(
            layer_forward(&spec, &state, &t(&[1.0, 2.0, 3.0])),
            Err(Error::Dimension(_))
        ));
        let (_, inter) = layer_forward(&spec, &state, &t(&[1.0, 2.0])).unwrap();
        assert!(matches!(
            layer_backward(&spec, &state, &inter, &t(&[1.0, 1.0])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(LayerSpec::affine(0, 3).validate().is_err());
        assert!(LayerSpec {
            kind: LayerKind::Tanh,
            in_dim: 2,
            out_dim: 3
        }
        .validate()
        .is_err());
        assert!(LayerSpec::tanh(4).validate().is_ok());
    }

    #[test]
    fn batched_affine_matches_rowwise() {
        let spec = LayerSpec::affine(2, 2);
        let state = LayerState::affine(&spec, &[1.0, 2.0, 3.0, 4.0], &[0.5, -0.5]).unwrap();
        let x = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let (y, _) = layer_forward(&spec, &state, &x).unwrap();
        assert_eq!(y.shape(), &[2, 2]);
        assert_eq!(y.data(), &[1.5, 2.5, 2.5, 3.5]);
    }
}
