//! Pipelined execution of decoupled modules.
//!
//! Module `k` of `K` forwards batch `τ - (k-1)` at tick `τ` and, in the same
//! tick, back-propagates batch `τ - (k-1) - 2(K-k)`: the gradient arriving
//! from above belongs to a batch it forwarded `2(K-k)` ticks earlier. Within
//! a tick the order is forward, backward, update. The forward index is the
//! module's *slot*; slot `M·s + j` feeds slot `j` of the accumulator for
//! update `s + 1`, and the update fires at the end of slot `M·s + M - 1`.
//! Backward indices below zero (pipeline fill) fill their slot with nothing.
//!
//! Both runners drive the same [`ModuleWorker::tick`]:
//! [`run_clocked`] steps all modules under one global clock, and
//! [`run_parallel`] gives every module its own thread connected by bounded
//! FIFO queues. They perform identical floating-point work and so produce
//! identical traces.

mod clocked;
mod parallel;
mod worker;

pub use clocked::run_clocked;
pub use parallel::run_parallel;
pub use worker::{
    ActivationMsg, ForwardContext, GradientMsg, Halt, Inbox, Missing, ModuleWorker, Outbox,
};

use std::time::Duration;

use crate::data::{BatchSampler, Dataset};
use crate::error::{Error, Result};
use crate::net::{validate_layers, LayerSpec, LossKind};
use crate::optimizer::{LrSchedule, SgdConfig};
use crate::partition::Partition;
use crate::scalar::Scalar;
use crate::trace::RunTrace;

/// Loss or gradient norms above this are treated as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    Clocked,
    Parallel,
}

#[derive(Debug, Clone)]
pub struct TrainConfig<T> {
    pub layers: Vec<LayerSpec>,
    pub partition: Partition,
    pub loss: LossKind,
    /// Accumulation steps `M`.
    pub accumulation: usize,
    pub batch_size: usize,
    /// Number of updates `S` every module performs.
    pub updates: usize,
    pub lr: LrSchedule,
    pub sgd: SgdConfig<T>,
    pub init_seed: u64,
    pub sampler_seed: u64,
    pub mode: ExecutionMode,
    /// Keep the per-tick event log in the trace.
    pub record_events: bool,
    pub divergence_threshold: f64,
    /// How long a parallel worker waits for a message before declaring deadlock.
    pub deadlock_timeout: Duration,
}

impl<T: Scalar> TrainConfig<T> {
    /// Configuration with plain SGD and the given learning-rate schedule.
    pub fn new(layers: Vec<LayerSpec>, partition: Partition, loss: LossKind, lr: LrSchedule) -> Self {
        Self {
            layers,
            partition,
            loss,
            accumulation: 1,
            batch_size: 32,
            updates: 100,
            lr,
            sgd: SgdConfig::plain(),
            init_seed: 0,
            sampler_seed: 0,
            mode: ExecutionMode::Clocked,
            record_events: false,
            divergence_threshold: DIVERGENCE_THRESHOLD,
            deadlock_timeout: Duration::from_secs(60),
        }
    }

    pub fn splits(&self) -> usize {
        self.partition.num_modules()
    }

    /// Total forward slots `M · S`.
    pub fn total_slots(&self) -> u64 {
        (self.accumulation * self.updates) as u64
    }

    pub fn sampler(&self) -> BatchSampler {
        BatchSampler {
            seed: self.sampler_seed,
            batch_size: self.batch_size,
        }
    }

    /// Updates per epoch for learning-rate bookkeeping on `data`.
    pub fn updates_per_epoch(&self, data: &Dataset<T>) -> f64 {
        self.sampler().batches_per_epoch(data.len()) as f64 / self.accumulation as f64
    }

    pub fn validate(&self) -> Result<()> {
        validate_layers(&self.layers)?;
        if self.partition.num_layers() != self.layers.len() {
            return Err(Error::Config(format!(
                "partition covers {} layers, network has {}",
                self.partition.num_layers(),
                self.layers.len()
            )));
        }
        if self.accumulation == 0 || self.batch_size == 0 || self.updates == 0 {
            return Err(Error::Config(format!(
                "accumulation ({}), batch size ({}) and updates ({}) must all be at least 1",
                self.accumulation, self.batch_size, self.updates
            )));
        }
        self.lr.validate()?;
        self.sgd.validate()?;
        Ok(())
    }

    pub(crate) fn check_data(&self, data: &Dataset<T>) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Config("dataset is empty".into()));
        }
        if data.input_dim() != self.layers[0].in_dim {
            return Err(Error::Config(format!(
                "dataset has {} features, first layer expects {}",
                data.input_dim(),
                self.layers[0].in_dim
            )));
        }
        Ok(())
    }
}

/// `(forward_tick, backward_tick)` of batch `b` in module `k` (1-based) of `K`.
pub fn schedule_position(b: u64, k: u64, splits: u64) -> Result<(u64, u64)> {
    if k == 0 || k > splits {
        return Err(Error::Domain(format!("module {k} out of range for split size {splits}")));
    }
    Ok((b + (k - 1), b + 2 * splits - k - 1))
}

/// Runs in the configured [`ExecutionMode`].
pub fn run<T: Scalar>(config: &TrainConfig<T>, data: &Dataset<T>) -> Result<RunTrace> {
    match config.mode {
        ExecutionMode::Clocked => run_clocked(config, data),
        ExecutionMode::Parallel => run_parallel(config, data),
    }
}
