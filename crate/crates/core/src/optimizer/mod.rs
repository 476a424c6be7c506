//! Gradient accumulation, the averaged SGD update and learning-rate schedules.

mod accumulator;
mod schedule;
mod sgd;

pub use accumulator::{Accumulator, SlotRecord};
pub use schedule::{epochs_elapsed, scaled_base_lr, LrSchedule};
pub use sgd::{ga_update, SgdConfig, UpdateOutcome};
