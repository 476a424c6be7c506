use std::sync::mpsc::{sync_channel, Receiver, RecvTimeoutError, SyncSender};
use std::thread;
use std::time::Duration;

use super::worker::{ActivationMsg, GradientMsg, Halt, Inbox, ModuleWorker};
use super::TrainConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::flatten_params;
use crate::scalar::Scalar;
use crate::trace::{assemble_records, ModuleUpdate, RunTrace, TickEvent};

struct Links<T> {
    act_in: Option<Receiver<ActivationMsg<T>>>,
    act_out: Option<SyncSender<ActivationMsg<T>>>,
    grad_in: Option<Receiver<GradientMsg<T>>>,
    grad_out: Option<SyncSender<GradientMsg<T>>>,
}

struct Finished {
    updates: Vec<ModuleUpdate>,
    events: Vec<TickEvent>,
    params: Vec<f64>,
    diverged: bool,
}

enum Received<M> {
    Message(M),
    /// The sender has stopped and its queue is drained.
    Closed,
}

fn receive<M>(rx: &Receiver<M>, timeout: Duration, what: &str, module: usize) -> Result<Received<M>> {
    match rx.recv_timeout(timeout) {
        Ok(m) => Ok(Received::Message(m)),
        Err(RecvTimeoutError::Disconnected) => Ok(Received::Closed),
        Err(RecvTimeoutError::Timeout) => Err(Error::Protocol(format!(
            "module {module} waited {timeout:?} for {what}: deadlock"
        ))),
    }
}

/// Runs every module on its own thread, linked by bounded FIFO queues.
pub fn run_parallel<T: Scalar>(config: &TrainConfig<T>, data: &Dataset<T>) -> Result<RunTrace> {
    let workers = ModuleWorker::build_all(config, data)?;
    let splits = workers.len();
    // at most 2(K - k) + 1 messages are ever in flight on a link
    let capacity = 2 * splits + 2;

    let mut links: Vec<Links<T>> = (0..splits)
        .map(|_| Links {
            act_in: None,
            act_out: None,
            grad_in: None,
            grad_out: None,
        })
        .collect();
    for k in 0..splits.saturating_sub(1) {
        let (tx, rx) = sync_channel(capacity);
        links[k].act_out = Some(tx);
        links[k + 1].act_in = Some(rx);
        let (tx, rx) = sync_channel(capacity);
        links[k + 1].grad_out = Some(tx);
        links[k].grad_in = Some(rx);
    }

    let timeout = config.deadlock_timeout;
    let total_slots = config.total_slots();
    let results: Vec<Result<Finished>> = thread::scope(|scope| {
        let handles: Vec<_> = workers
            .into_iter()
            .zip(links)
            .map(|(worker, link)| scope.spawn(move || drive(worker, link, total_slots, timeout)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Protocol("module thread panicked".into())))
            })
            .collect()
    });

    let mut per_module = Vec::with_capacity(splits);
    let mut events = Vec::new();
    let mut final_params = Vec::new();
    let mut diverged = false;
    for result in results {
        let done = result?;
        per_module.push(done.updates);
        events.extend(done.events);
        final_params.extend(done.params);
        diverged |= done.diverged;
    }
    events.sort_by_key(|e| (e.tick, e.module));
    Ok(RunTrace {
        records: assemble_records(&per_module),
        final_params,
        diverged,
        events,
    })
}

fn drive<T: Scalar>(
    mut worker: ModuleWorker<'_, T>,
    link: Links<T>,
    total_slots: u64,
    timeout: Duration,
) -> Result<Finished> {
    let k = worker.module();
    let offset = (k - 1) as u64;
    let mut diverged = false;
    for slot in 0..total_slots {
        let tick = slot + offset;
        let mut inbox = Inbox::default();
        let mut upstream_closed = false;
        let mut downstream_closed = false;
        if let Some(rx) = &link.act_in {
            match receive(rx, timeout, "an activation", k)? {
                Received::Message(m) => inbox.activation = Some(m),
                Received::Closed => upstream_closed = true,
            }
        }
        if !upstream_closed && worker.needs_gradient(slot) {
            if let Some(rx) = &link.grad_in {
                match receive(rx, timeout, "a gradient", k)? {
                    Received::Message(m) => inbox.gradient = Some(m),
                    Received::Closed => downstream_closed = true,
                }
            }
        }
        let out = worker.tick(tick, inbox)?;
        // a stopped neighbour has dropped its receiver; its messages are moot
        if let (Some(msg), Some(tx)) = (out.activation, &link.act_out) {
            let _ = tx.send(msg);
        }
        if let (Some(msg), Some(tx)) = (out.gradient, &link.grad_out) {
            let _ = tx.send(msg);
        }
        match out.halt {
            None => {}
            Some(Halt::Diverged(_)) => {
                diverged = true;
                break;
            }
            Some(Halt::Starved(_)) if upstream_closed || downstream_closed => break,
            Some(Halt::Starved(missing)) => {
                return Err(Error::Protocol(format!(
                    "module {k} starved of {missing:?} at tick {tick} with open links"
                )))
            }
        }
    }
    let (updates, events, params) = worker.into_parts();
    Ok(Finished {
        updates,
        events,
        params: flatten_params(&params),
        diverged,
    })
}
