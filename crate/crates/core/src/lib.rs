//! Accumulated decoupled learning (ADL).
//!
//! A feedforward network is split depth-wise into `K` contiguous modules.
//! Every module runs one forward and one delayed backward per tick, passing
//! activations upward and input gradients downward, and applies an averaged
//! update once `M` gradients have been accumulated. This crate provides:
//!
//! - [`net`]: dense layers with closed-form backward passes and a
//!   finite-difference gradient oracle;
//! - [`partition`]: contiguous depth-wise splits;
//! - [`staleness`]: exact staleness arithmetic and convergence-bound
//!   calculators;
//! - [`optimizer`]: gradient accumulation, SGD with momentum / weight decay,
//!   learning-rate schedules;
//! - [`scheduler`]: a tick-accurate clocked simulator and a threaded
//!   executor that produce bit-identical traces;
//! - [`oracle`]: synchronous and delayed-replay reference trainers;
//! - [`data`]: synthetic datasets and a counter-based batch sampler;
//! - [`trace`]: run traces, CSV serialization and summaries.
//!
//! Numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! pin the common double-precision instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0)` also rejects NaN

pub mod data;
pub mod error;
pub mod net;
pub mod optimizer;
pub mod oracle;
pub mod partition;
pub mod scalar;
pub mod scheduler;
pub mod staleness;
pub mod tensor;
pub mod trace;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type LayerState64 = net::LayerState<f64>;
pub type Dataset64 = data::Dataset<f64>;
pub type TrainConfig64 = scheduler::TrainConfig<f64>;
pub type BoundInputs64 = staleness::BoundInputs<f64>;
pub type Accumulator64 = optimizer::Accumulator<f64>;
