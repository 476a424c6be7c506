use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{flatten_params, init_params, net_backward, net_forward, LayerState};
use crate::optimizer::{ga_update, Accumulator};
use crate::scalar::Scalar;
use crate::scheduler::TrainConfig;
use crate::staleness::{effective_version, StalenessQuery};
use crate::trace::{ModuleProvenance, RunTrace, SlotProvenance, UpdateRecord};

/// Full-network parameter snapshots; entry `s` holds the parameters after
/// `s` updates (entry 0 is the initialisation).
#[derive(Debug, Clone, Default)]
pub struct ParamHistory<T> {
    snapshots: Vec<Vec<LayerState<T>>>,
}

impl<T: Scalar> ParamHistory<T> {
    pub fn new(initial: Vec<LayerState<T>>) -> Self {
        Self {
            snapshots: vec![initial],
        }
    }

    pub fn push(&mut self, snapshot: Vec<LayerState<T>>) {
        self.snapshots.push(snapshot);
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn get(&self, version: u64) -> Result<&[LayerState<T>]> {
        self.snapshots
            .get(version as usize)
            .map(Vec::as_slice)
            .ok_or_else(|| {
                Error::Protocol(format!(
                    "snapshot {version} requested, history holds {}",
                    self.snapshots.len()
                ))
            })
    }

    pub fn latest(&self) -> &[LayerState<T>] {
        self.snapshots.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Replays pipelined training from snapshots: module `k`'s direction for
/// update `s + 1` averages, over slots `j`, the slice of the full-network
/// gradient at batch `M·s + j - 2(K-k)` evaluated on the snapshot chosen by
/// [`effective_version`]. Negative batches contribute zero. All modules
/// update together.
pub fn delayed_replay<T: Scalar>(config: &TrainConfig<T>, data: &Dataset<T>) -> Result<RunTrace> {
    delayed_replay_with_history(config, data).map(|(trace, _)| trace)
}

/// [`delayed_replay`] that also returns every snapshot it produced.
pub fn delayed_replay_with_history<T: Scalar>(
    config: &TrainConfig<T>,
    data: &Dataset<T>,
) -> Result<(RunTrace, ParamHistory<T>)> {
    config.validate()?;
    config.check_data(data)?;
    let splits = config.splits();
    let m = config.accumulation as u64;
    let sampler = config.sampler();
    let per_epoch = config.updates_per_epoch(data);

    let initial: Vec<LayerState<T>> = init_params(&config.layers, config.init_seed);
    let mut history = ParamHistory::new(initial.clone());
    let mut modules: Vec<Vec<LayerState<T>>> = (1..=splits)
        .map(|k| initial[config.partition.range(k)].to_vec())
        .collect();
    let mut accumulators: Vec<Accumulator<T>> = modules
        .iter()
        .map(|p| Accumulator::new(p.iter().map(|l| l.params.len()).sum(), config.accumulation))
        .collect();
    let mut velocities: Vec<Vec<T>> = vec![Vec::new(); splits];
    let mut trace = RunTrace::default();

    'train: for s in 0..config.updates as u64 {
        let mut loss_sum = T::zero();
        for k in 1..=splits {
            let delay = 2 * (splits - k) as i64;
            for j in 0..m {
                let batch = (m * s + j) as i64 - delay;
                let query = StalenessQuery::new(splits as u64, k as u64, m, s, j);
                let version = effective_version(&query)?;
                if batch < 0 {
                    accumulators[k - 1].skip(batch, version)?;
                    continue;
                }
                let snapshot = history.get(version)?;
                let (input, target) = sampler.batch(data, batch as u64);
                let (loss, ctx) = match net_forward(&config.layers, snapshot, &input, config.loss, &target) {
                    Ok(out) => out,
                    Err(Error::Divergence(_)) => {
                        trace.diverged = true;
                        break 'train;
                    }
                    Err(e) => return Err(e),
                };
                if k == splits {
                    if loss.to_f64_lossy().abs() > config.divergence_threshold {
                        trace.diverged = true;
                        break 'train;
                    }
                    loss_sum = loss_sum + loss;
                }
                let (grads, _) = net_backward(&config.layers, snapshot, &ctx, config.loss, &target)?;
                accumulators[k - 1].accumulate(&grads[config.partition.range(k)], batch, version)?;
            }
        }

        let lr = T::of(config.lr.lr_at(s, per_epoch));
        let mut provenance = Vec::with_capacity(splits);
        let mut sq_total = 0.0;
        for k in 1..=splits {
            let records = accumulators[k - 1].provenance().to_vec();
            let outcome = match ga_update(
                &mut modules[k - 1],
                &mut accumulators[k - 1],
                lr,
                &config.sgd,
                &mut velocities[k - 1],
            ) {
                Ok(outcome) => outcome,
                Err(Error::Divergence(_)) => {
                    trace.diverged = true;
                    break 'train;
                }
                Err(e) => return Err(e),
            };
            let sq = outcome.grad_sq_norm.to_f64_lossy();
            if !sq.is_finite() || sq.sqrt() > config.divergence_threshold {
                trace.diverged = true;
                break 'train;
            }
            sq_total += sq;
            let slots = records
                .iter()
                .enumerate()
                .map(|(j, rec)| SlotProvenance {
                    j: j as u64,
                    batch_index: rec.batch_index,
                    version_used: rec.version,
                    d_kj: (s as i64 - rec.batch_index.div_euclid(m as i64)) as u64,
                })
                .collect();
            provenance.push(ModuleProvenance {
                module: k,
                tick: m * (s + 1) - 1 + (k - 1) as u64,
                slots,
            });
        }
        history.push(modules.concat());
        trace.records.push(UpdateRecord {
            s,
            loss: (loss_sum / T::of(m as f64)).to_f64_lossy(),
            grad_norm: sq_total.sqrt(),
            modules: provenance,
        });
    }
    trace.final_params = flatten_params(&modules.concat());
    Ok((trace, history))
}
