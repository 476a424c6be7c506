use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{flatten_params, init_params, net_backward, net_forward, LayerState};
use crate::optimizer::{ga_update, Accumulator};
use crate::scalar::Scalar;
use crate::scheduler::TrainConfig;
use crate::trace::{ModuleProvenance, RunTrace, SlotProvenance, UpdateRecord};

/// Synchronous training with gradient accumulation: `M` forward/backward
/// passes on the same parameters, averaged, then one update. The partition
/// is ignored.
pub fn sync_ga_sgd<T: Scalar>(config: &TrainConfig<T>, data: &Dataset<T>) -> Result<RunTrace> {
    config.validate()?;
    config.check_data(data)?;
    let m = config.accumulation as u64;
    let sampler = config.sampler();
    let per_epoch = config.updates_per_epoch(data);
    let mut params: Vec<LayerState<T>> = init_params(&config.layers, config.init_seed);
    let param_len = params.iter().map(|p| p.params.len()).sum();
    let mut acc = Accumulator::new(param_len, config.accumulation);
    let mut velocity = Vec::new();
    let mut trace = RunTrace::default();

    'train: for s in 0..config.updates as u64 {
        let mut loss_sum = T::zero();
        for j in 0..m {
            let t = m * s + j;
            let (input, target) = sampler.batch(data, t);
            let (loss, ctx) = match net_forward(&config.layers, &params, &input, config.loss, &target) {
                Ok(out) => out,
                Err(Error::Divergence(_)) => {
                    trace.diverged = true;
                    break 'train;
                }
                Err(e) => return Err(e),
            };
            if loss.to_f64_lossy().abs() > config.divergence_threshold {
                trace.diverged = true;
                break 'train;
            }
            loss_sum = loss_sum + loss;
            let (grads, _) = net_backward(&config.layers, &params, &ctx, config.loss, &target)?;
            acc.accumulate(&grads, t as i64, s)?;
        }
        let provenance = acc.provenance().to_vec();
        let lr = T::of(config.lr.lr_at(s, per_epoch));
        let outcome = match ga_update(&mut params, &mut acc, lr, &config.sgd, &mut velocity) {
            Ok(outcome) => outcome,
            Err(Error::Divergence(_)) => {
                trace.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let sq = outcome.grad_sq_norm.to_f64_lossy();
        if !sq.is_finite() || sq.sqrt() > config.divergence_threshold {
            trace.diverged = true;
            break;
        }
        let slots = provenance
            .iter()
            .enumerate()
            .map(|(j, rec)| SlotProvenance {
                j: j as u64,
                batch_index: rec.batch_index,
                version_used: rec.version,
                d_kj: 0,
            })
            .collect();
        trace.records.push(UpdateRecord {
            s,
            loss: (loss_sum / T::of(m as f64)).to_f64_lossy(),
            grad_norm: (0.0 + sq).sqrt(),
            modules: vec![ModuleProvenance {
                module: 1,
                tick: m * s + m - 1,
                slots,
            }],
        });
    }
    trace.final_params = flatten_params(&params);
    Ok(trace)
}
