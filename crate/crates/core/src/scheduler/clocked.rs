use std::collections::VecDeque;

use super::worker::{ActivationMsg, GradientMsg, Halt, Inbox, Missing, ModuleWorker};
use super::TrainConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::flatten_params;
use crate::scalar::Scalar;
use crate::trace::{assemble_records, RunTrace};

/// Messages in flight, tagged with the tick that produced them.
struct Mailbox<M> {
    queue: VecDeque<(u64, M)>,
}

impl<M> Mailbox<M> {
    fn new() -> Self {
        Self {
            queue: VecDeque::new(),
        }
    }

    /// The message sent during the previous tick, if any.
    fn take(&mut self, tick: u64) -> Result<Option<M>> {
        match self.queue.front() {
            Some(&(sent, _)) if sent + 1 == tick => Ok(self.queue.pop_front().map(|(_, m)| m)),
            Some(&(sent, _)) if sent + 1 < tick => Err(Error::Protocol(format!(
                "message from tick {sent} still undelivered at tick {tick}"
            ))),
            _ => Ok(None),
        }
    }
}

/// Steps every module under one global clock on the calling thread.
pub fn run_clocked<T: Scalar>(config: &TrainConfig<T>, data: &Dataset<T>) -> Result<RunTrace> {
    let mut workers = ModuleWorker::build_all(config, data)?;
    let splits = workers.len();
    // index by receiving module, 1-based; slot 0 and splits + 1 unused
    let mut activations: Vec<Mailbox<ActivationMsg<T>>> = (0..=splits + 1).map(|_| Mailbox::new()).collect();
    let mut gradients: Vec<Mailbox<GradientMsg<T>>> = (0..=splits + 1).map(|_| Mailbox::new()).collect();
    let mut alive = vec![true; splits + 2];
    alive[0] = false;
    alive[splits + 1] = false;
    let mut diverged = false;

    let ticks = config.total_slots() + splits as u64 - 1;
    for tick in 0..ticks {
        for k in 1..=splits {
            if !alive[k] {
                continue;
            }
            let worker = &mut workers[k - 1];
            let Some(slot) = worker.slot_at(tick) else {
                continue;
            };
            let inbox = Inbox {
                activation: if worker.needs_activation() { activations[k].take(tick)? } else { None },
                gradient: if worker.needs_gradient(slot) { gradients[k].take(tick)? } else { None },
            };
            let out = worker.tick(tick, inbox)?;
            if let Some(msg) = out.activation {
                activations[k + 1].queue.push_back((tick, msg));
            }
            if let Some(msg) = out.gradient {
                gradients[k - 1].queue.push_back((tick, msg));
            }
            match out.halt {
                None => {}
                Some(Halt::Diverged(_)) => {
                    diverged = true;
                    alive[k] = false;
                }
                Some(Halt::Starved(missing)) => {
                    let source = match missing {
                        Missing::Activation => k - 1,
                        Missing::Gradient => k + 1,
                    };
                    if alive[source] {
                        return Err(Error::Protocol(format!(
                            "module {k} missing {missing:?} at tick {tick} from live module {source}"
                        )));
                    }
                    alive[k] = false;
                }
            }
        }
    }

    let mut per_module = Vec::with_capacity(splits);
    let mut events = Vec::new();
    let mut final_params = Vec::new();
    for worker in workers {
        let (updates, ev, params) = worker.into_parts();
        per_module.push(updates);
        events.extend(ev);
        final_params.extend(flatten_params(&params));
    }
    events.sort_by_key(|e| (e.tick, e.module));
    Ok(RunTrace {
        records: assemble_records(&per_module),
        final_params,
        diverged,
        events,
    })
}
