use std::collections::VecDeque;
use std::sync::Arc;

use super::TrainConfig;
use crate::data::{BatchSampler, Dataset};
use crate::error::{Error, Result};
use crate::net::{self, init_params, loss_grad, loss_value, LayerSpec, LayerState, Target};
use crate::optimizer::{ga_update, Accumulator};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::trace::{EventKind, ModuleUpdate, SlotProvenance, TickEvent};

/// Output of module `k` for batch `batch_index`, sent to module `k + 1`.
#[derive(Debug, Clone)]
pub struct ActivationMsg<T> {
    pub batch_index: u64,
    pub tensor: Tensor<T>,
}

/// Gradient with respect to the input of module `k`, sent to module `k - 1`.
#[derive(Debug, Clone)]
pub struct GradientMsg<T> {
    pub batch_index: u64,
    pub tensor: Tensor<T>,
}

/// Stashed forward computation awaiting its gradient.
#[derive(Debug, Clone)]
pub struct ForwardContext<T> {
    pub batch_index: u64,
    pub input: Tensor<T>,
    pub intermediates: Vec<Tensor<T>>,
    /// Network output and target, kept by the top module only.
    pub top: Option<(Tensor<T>, Target<T>)>,
    pub param_version: u64,
    /// Parameters the forward pass was computed with.
    pub params: Arc<Vec<LayerState<T>>>,
}

#[derive(Debug, Clone, Default)]
pub struct Inbox<T> {
    pub activation: Option<ActivationMsg<T>>,
    pub gradient: Option<GradientMsg<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Missing {
    Activation,
    Gradient,
}

/// Why a module stopped during a tick.
#[derive(Debug, Clone, PartialEq)]
pub enum Halt {
    Diverged(String),
    /// A message the tick required was not in the inbox.
    Starved(Missing),
}

/// Everything a tick produced. Messages produced before a halt are still
/// present and must be delivered.
#[derive(Debug, Clone)]
pub struct Outbox<T> {
    pub activation: Option<ActivationMsg<T>>,
    pub gradient: Option<GradientMsg<T>>,
    pub update: Option<ModuleUpdate>,
    pub halt: Option<Halt>,
}

impl<T> Default for Outbox<T> {
    fn default() -> Self {
        Self {
            activation: None,
            gradient: None,
            update: None,
            halt: None,
        }
    }
}

/// State of one module: current parameters, stash and accumulator.
pub struct ModuleWorker<'a, T> {
    module: usize,
    splits: usize,
    accumulation: usize,
    total_slots: u64,
    layers: &'a [LayerSpec],
    config: &'a TrainConfig<T>,
    data: &'a Dataset<T>,
    sampler: BatchSampler,
    updates_per_epoch: f64,
    params: Arc<Vec<LayerState<T>>>,
    version: u64,
    stash: VecDeque<ForwardContext<T>>,
    acc: Accumulator<T>,
    velocity: Vec<T>,
    loss_sum: T,
    updates: Vec<ModuleUpdate>,
    events: Vec<TickEvent>,
}

impl<'a, T: Scalar> ModuleWorker<'a, T> {
    /// Workers for every module, initialised from the configured seed.
    pub fn build_all(config: &'a TrainConfig<T>, data: &'a Dataset<T>) -> Result<Vec<Self>> {
        config.validate()?;
        config.check_data(data)?;
        let mut all = init_params::<T>(&config.layers, config.init_seed);
        let splits = config.splits();
        let mut workers = Vec::with_capacity(splits);
        // peel modules off the back so each takes ownership of its slice
        for k in (1..=splits).rev() {
            let range = config.partition.range(k);
            let params = all.split_off(range.start);
            workers.push(Self::new(config, data, k, params));
        }
        workers.reverse();
        Ok(workers)
    }

    fn new(
        config: &'a TrainConfig<T>,
        data: &'a Dataset<T>,
        module: usize,
        params: Vec<LayerState<T>>,
    ) -> Self {
        let layers = &config.layers[config.partition.range(module)];
        let param_len = params.iter().map(|p| p.params.len()).sum();
        Self {
            module,
            splits: config.splits(),
            accumulation: config.accumulation,
            total_slots: config.total_slots(),
            layers,
            config,
            data,
            sampler: config.sampler(),
            updates_per_epoch: config.updates_per_epoch(data),
            params: Arc::new(params),
            version: 0,
            stash: VecDeque::new(),
            acc: Accumulator::new(param_len, config.accumulation),
            velocity: Vec::new(),
            loss_sum: T::zero(),
            updates: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn module(&self) -> usize {
        self.module
    }

    pub fn params(&self) -> &[LayerState<T>] {
        &self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn stash_len(&self) -> usize {
        self.stash.len()
    }

    /// Completed update reports, in order.
    pub fn updates(&self) -> &[ModuleUpdate] {
        &self.updates
    }

    pub fn into_parts(self) -> (Vec<ModuleUpdate>, Vec<TickEvent>, Vec<LayerState<T>>) {
        let params = Arc::try_unwrap(self.params).unwrap_or_else(|shared| (*shared).clone());
        (self.updates, self.events, params)
    }

    /// Forward slot handled at tick `tick`, if any.
    pub fn slot_at(&self, tick: u64) -> Option<u64> {
        let offset = (self.module - 1) as u64;
        (tick >= offset && tick - offset < self.total_slots).then(|| tick - offset)
    }

    /// Backward batch index handled in forward slot `slot`; negative during fill.
    pub fn backward_index(&self, slot: u64) -> i64 {
        slot as i64 - 2 * (self.splits - self.module) as i64
    }

    pub fn needs_activation(&self) -> bool {
        self.module > 1
    }

    pub fn needs_gradient(&self, slot: u64) -> bool {
        self.module < self.splits && self.backward_index(slot) >= 0
    }

    /// Whether module `k - 1` still expects the input gradient of `batch`.
    fn sends_gradient(&self, batch: u64) -> bool {
        let receiver_slot = batch + 2 * (self.splits - self.module + 1) as u64;
        self.module > 1 && receiver_slot < self.total_slots
    }

    /// Runs forward, backward and, at the end of a group, the update for tick `tick`.
    pub fn tick(&mut self, tick: u64, inbox: Inbox<T>) -> Result<Outbox<T>> {
        let slot = self.slot_at(tick).ok_or_else(|| {
            Error::Protocol(format!("module {} has no work at tick {tick}", self.module))
        })?;
        let mut out = Outbox::default();
        match self.forward(tick, slot, inbox.activation)? {
            Ok(act) => out.activation = act,
            Err(halt) => {
                out.halt = Some(halt);
                return Ok(out);
            }
        }
        match self.backward(tick, slot, inbox.gradient)? {
            Ok(grad) => out.gradient = grad,
            Err(halt) => {
                out.halt = Some(halt);
                return Ok(out);
            }
        }
        if slot % self.accumulation as u64 == self.accumulation as u64 - 1 {
            match self.update(tick, slot)? {
                Ok(report) => out.update = Some(report),
                Err(halt) => out.halt = Some(halt),
            }
        }
        Ok(out)
    }

    fn forward(
        &mut self,
        tick: u64,
        slot: u64,
        incoming: Option<ActivationMsg<T>>,
    ) -> Result<std::result::Result<Option<ActivationMsg<T>>, Halt>> {
        let expected_version = slot / self.accumulation as u64;
        if self.version != expected_version {
            return Err(Error::Protocol(format!(
                "module {} forwards batch {slot} with version {}, expected {expected_version}",
                self.module, self.version
            )));
        }
        let input = if self.needs_activation() {
            match incoming {
                None => return Ok(Err(Halt::Starved(Missing::Activation))),
                Some(msg) if msg.batch_index != slot => {
                    return Err(Error::Protocol(format!(
                        "module {} expected activation {slot}, got {}",
                        self.module, msg.batch_index
                    )))
                }
                Some(msg) => msg.tensor,
            }
        } else {
            if incoming.is_some() {
                return Err(Error::Protocol("bottom module received an activation".into()));
            }
            self.sampler.batch(self.data, slot).0
        };

        let (output, intermediates) = net::forward(self.layers, &self.params, &input)?;
        let (top, activation) = if self.module == self.splits {
            let target = self.sampler.batch(self.data, slot).1;
            let loss = loss_value(self.config.loss, &output, &target)?;
            let magnitude = loss.to_f64_lossy();
            if !magnitude.is_finite() || magnitude.abs() > self.config.divergence_threshold {
                return Ok(Err(Halt::Diverged(format!("loss {magnitude} at batch {slot}"))));
            }
            self.loss_sum = self.loss_sum + loss;
            (Some((output, target)), None)
        } else {
            let msg = ActivationMsg {
                batch_index: slot,
                tensor: output,
            };
            (None, Some(msg))
        };
        self.stash.push_back(ForwardContext {
            batch_index: slot,
            input,
            intermediates,
            top,
            param_version: self.version,
            params: Arc::clone(&self.params),
        });
        let bound = 2 * (self.splits - self.module) + 1;
        if self.stash.len() > bound {
            return Err(Error::Protocol(format!(
                "module {} stash holds {} contexts, bound {bound}",
                self.module,
                self.stash.len()
            )));
        }
        self.log(tick, EventKind::Forward, slot);
        Ok(Ok(activation))
    }

    fn backward(
        &mut self,
        tick: u64,
        slot: u64,
        incoming: Option<GradientMsg<T>>,
    ) -> Result<std::result::Result<Option<GradientMsg<T>>, Halt>> {
        let batch = self.backward_index(slot);
        if batch < 0 {
            if incoming.is_some() {
                return Err(Error::Protocol(format!(
                    "module {} received a gradient during pipeline fill",
                    self.module
                )));
            }
            self.acc.skip(batch, 0)?;
            return Ok(Ok(None));
        }
        let batch = batch as u64;
        let upstream = if self.module == self.splits {
            None
        } else {
            match incoming {
                None => return Ok(Err(Halt::Starved(Missing::Gradient))),
                Some(msg) if msg.batch_index != batch => {
                    return Err(Error::Protocol(format!(
                        "module {} expected gradient {batch}, got {}",
                        self.module, msg.batch_index
                    )))
                }
                Some(msg) => Some(msg.tensor),
            }
        };
        let ctx = match self.stash.pop_front() {
            Some(ctx) if ctx.batch_index == batch => ctx,
            other => {
                return Err(Error::Protocol(format!(
                    "module {} stash head is {:?}, expected batch {batch}",
                    self.module,
                    other.map(|c| c.batch_index)
                )))
            }
        };
        let upstream = match (upstream, &ctx.top) {
            (Some(g), _) => g,
            (None, Some((output, target))) => loss_grad(self.config.loss, output, target)?,
            (None, None) => {
                return Err(Error::Protocol(format!(
                    "module {} has neither a gradient nor a loss for batch {batch}",
                    self.module
                )))
            }
        };
        let (grads, input_grad) =
            net::backward(self.layers, &ctx.params, &ctx.intermediates, upstream)?;
        self.acc.accumulate(&grads, batch as i64, ctx.param_version)?;
        self.log(tick, EventKind::Backward, batch);
        let gradient = self.sends_gradient(batch).then_some(GradientMsg {
            batch_index: batch,
            tensor: input_grad,
        });
        Ok(Ok(gradient))
    }

    fn update(
        &mut self,
        tick: u64,
        slot: u64,
    ) -> Result<std::result::Result<ModuleUpdate, Halt>> {
        let s = slot / self.accumulation as u64;
        let lr = T::of(self.config.lr.lr_at(s, self.updates_per_epoch));
        let provenance = self.acc.provenance().to_vec();
        let params = Arc::make_mut(&mut self.params);
        let outcome = match ga_update(params, &mut self.acc, lr, &self.config.sgd, &mut self.velocity) {
            Ok(outcome) => outcome,
            Err(Error::Divergence(msg)) => return Ok(Err(Halt::Diverged(msg))),
            Err(e) => return Err(e),
        };
        let grad_sq_norm = outcome.grad_sq_norm.to_f64_lossy();
        if !grad_sq_norm.is_finite() || grad_sq_norm.sqrt() > self.config.divergence_threshold {
            return Ok(Err(Halt::Diverged(format!(
                "gradient norm {} at update {s}",
                grad_sq_norm.sqrt()
            ))));
        }
        self.version += 1;

        let m = self.accumulation as i64;
        let slots = provenance
            .iter()
            .enumerate()
            .map(|(j, rec)| SlotProvenance {
                j: j as u64,
                batch_index: rec.batch_index,
                version_used: rec.version,
                d_kj: (s as i64 - rec.batch_index.div_euclid(m)) as u64,
            })
            .collect();
        let loss = (self.module == self.splits).then(|| {
            let mean = self.loss_sum / T::of(self.accumulation as f64);
            mean.to_f64_lossy()
        });
        self.loss_sum = T::zero();
        let report = ModuleUpdate {
            module: self.module,
            s,
            tick,
            grad_sq_norm,
            loss,
            slots,
        };
        self.updates.push(report.clone());
        self.log(tick, EventKind::Update, s);
        Ok(Ok(report))
    }

    fn log(&mut self, tick: u64, kind: EventKind, index: u64) {
        if self.config.record_events {
            self.events.push(TickEvent {
                tick,
                module: self.module,
                kind,
                index,
            });
        }
    }
}
