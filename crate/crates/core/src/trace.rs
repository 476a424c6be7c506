//! Run traces: per-update records, CSV serialization and run summaries.
//!
//! CSV schema, one row per accumulated slot:
//!
//! ```text
//! s,tick,loss,grad_norm,module,j,batch_index,version_used,d_kj
//! ```
//!
//! `s` is the update index whose group produced the row (the update maps
//! version `s` to `s + 1`), `tick` the logical tick at which `module` applied
//! that update, `loss` the mean top-module loss over the group, `grad_norm`
//! the global norm of the averaged gradient. `batch_index` is negative for
//! pipeline-fill slots that carried no gradient. Reals are written with 17
//! significant digits and parse back exactly.

use std::fmt;
use std::io::{Read, Write};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::staleness::{averaged_los, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotProvenance {
    pub j: u64,
    pub batch_index: i64,
    pub version_used: u64,
    /// Unclamped staleness of the slot.
    pub d_kj: u64,
}

impl SlotProvenance {
    pub fn skipped(&self) -> bool {
        self.batch_index < 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleProvenance {
    pub module: usize,
    pub tick: u64,
    pub slots: Vec<SlotProvenance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub s: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub modules: Vec<ModuleProvenance>,
}

/// What one module reports when it applies an update.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleUpdate {
    pub module: usize,
    pub s: u64,
    pub tick: u64,
    pub grad_sq_norm: f64,
    /// Mean loss over the group; only the top module observes it.
    pub loss: Option<f64>,
    pub slots: Vec<SlotProvenance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Forward,
    Backward,
    Update,
}

/// Per-tick debugging event; `index` is a batch index or, for updates, `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickEvent {
    pub tick: u64,
    pub module: usize,
    pub kind: EventKind,
    pub index: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub records: Vec<UpdateRecord>,
    /// Final parameters of the whole network, layer order. Empty when parsed from CSV.
    pub final_params: Vec<f64>,
    pub diverged: bool,
    pub events: Vec<TickEvent>,
}

/// Joins per-module update reports into per-update records, stopping at the
/// first update not completed by every module. Module reports must be in
/// update order.
pub fn assemble_records(per_module: &[Vec<ModuleUpdate>]) -> Vec<UpdateRecord> {
    let complete = per_module.iter().map(Vec::len).min().unwrap_or(0);
    (0..complete)
        .map(|i| {
            let reports: Vec<&ModuleUpdate> = per_module.iter().map(|m| &m[i]).collect();
            let sq = reports.iter().fold(0.0, |acc, r| acc + r.grad_sq_norm);
            let loss = reports.last().and_then(|r| r.loss).unwrap_or(f64::NAN);
            UpdateRecord {
                s: reports[0].s,
                loss,
                grad_norm: sq.sqrt(),
                modules: reports
                    .iter()
                    .map(|r| ModuleProvenance {
                        module: r.module,
                        tick: r.tick,
                        slots: r.slots.clone(),
                    })
                    .collect(),
            }
        })
        .collect()
}

pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

const HEADER: [&str; 9] = [
    "s",
    "tick",
    "loss",
    "grad_norm",
    "module",
    "j",
    "batch_index",
    "version_used",
    "d_kj",
];

#[derive(Debug, Deserialize)]
struct Row {
    s: u64,
    tick: u64,
    loss: f64,
    grad_norm: f64,
    module: usize,
    j: u64,
    batch_index: i64,
    version_used: u64,
    d_kj: u64,
}

impl RunTrace {
    pub fn final_record(&self) -> Option<&UpdateRecord> {
        self.records.last()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for r in &self.records {
            for m in &r.modules {
                for slot in &m.slots {
                    w.write_record([
                        r.s.to_string(),
                        m.tick.to_string(),
                        format_real(r.loss),
                        format_real(r.grad_norm),
                        m.module.to_string(),
                        slot.j.to_string(),
                        slot.batch_index.to_string(),
                        slot.version_used.to_string(),
                        slot.d_kj.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Parses a trace written by [`RunTrace::write_csv`]. Only the CSV fields
    /// are recovered.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.iter().ne(HEADER.iter().copied()) {
            return Err(Error::Parse(format!("unexpected trace header {headers:?}")));
        }
        let mut records: Vec<UpdateRecord> = Vec::new();
        for row in reader.deserialize() {
            let row: Row = row?;
            let new_update = records.last().is_none_or(|r| r.s != row.s);
            if new_update {
                records.push(UpdateRecord {
                    s: row.s,
                    loss: row.loss,
                    grad_norm: row.grad_norm,
                    modules: Vec::new(),
                });
            }
            let rec = records.last_mut().unwrap();
            let new_module = rec.modules.last().is_none_or(|m| m.module != row.module);
            if new_module {
                rec.modules.push(ModuleProvenance {
                    module: row.module,
                    tick: row.tick,
                    slots: Vec::new(),
                });
            }
            rec.modules.last_mut().unwrap().slots.push(SlotProvenance {
                j: row.j,
                batch_index: row.batch_index,
                version_used: row.version_used,
                d_kj: row.d_kj,
            });
        }
        Ok(Self {
            records,
            ..Self::default()
        })
    }

    pub fn write_events_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tick", "module", "event", "index"])?;
        for e in &self.events {
            let kind = match e.kind {
                EventKind::Forward => "forward",
                EventKind::Backward => "backward",
                EventKind::Update => "update",
            };
            w.write_record([
                e.tick.to_string(),
                e.module.to_string(),
                kind.to_string(),
                e.index.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean of `s - version_used` for module `k` over updates none of whose
    /// slots fell in the pipeline fill. `None` if no such update exists.
    pub fn observed_averaged_los(&self, k: usize) -> Option<Rational> {
        let mut total = 0i64;
        let mut count = 0i64;
        for r in &self.records {
            let Some(m) = r.modules.iter().find(|m| m.module == k) else {
                continue;
            };
            if m.slots.iter().any(SlotProvenance::skipped) {
                continue;
            }
            for slot in &m.slots {
                total += r.s as i64 - slot.version_used as i64;
                count += 1;
            }
        }
        (count > 0).then(|| Rational::new(total, count))
    }
}

/// Human-readable run summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_loss: f64,
    pub final_grad_norm: f64,
    pub updates: usize,
    pub diverged: bool,
    pub wall_time_secs: f64,
    /// `(module, observed averaged LoS, predicted averaged LoS)`.
    pub staleness: Vec<(usize, Option<Rational>, Rational)>,
}

impl RunSummary {
    /// `splits` and `accumulation` describe the schedule that produced the
    /// trace; the synchronous oracle runs as a single module.
    pub fn new(trace: &RunTrace, splits: usize, accumulation: usize, wall_time_secs: f64) -> Self {
        let last = trace.final_record();
        let staleness = (1..=splits)
            .map(|k| {
                let predicted = averaged_los(splits as u64, k as u64, accumulation as u64)
                    .expect("valid schedule");
                (k, trace.observed_averaged_los(k), predicted)
            })
            .collect();
        Self {
            final_loss: last.map_or(f64::NAN, |r| r.loss),
            final_grad_norm: last.map_or(f64::NAN, |r| r.grad_norm),
            updates: trace.records.len(),
            diverged: trace.diverged,
            wall_time_secs,
            staleness,
        }
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "final_loss = {}", format_real(self.final_loss))?;
        writeln!(f, "final_grad_norm = {}", format_real(self.final_grad_norm))?;
        writeln!(f, "updates = {}", self.updates)?;
        writeln!(f, "diverged = {}", self.diverged)?;
        writeln!(f, "wall_time_secs = {:.6}", self.wall_time_secs)?;
        writeln!(f, "# module  observed_avg_los  predicted_avg_los")?;
        for (k, observed, predicted) in &self.staleness {
            let obs = observed.map_or_else(|| "n/a".to_string(), |r| r.to_string());
            writeln!(f, "los[{k}] = {obs} {predicted}")?;
        }
        Ok(())
    }
}
