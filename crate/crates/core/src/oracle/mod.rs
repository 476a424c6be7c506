//! Reference trainers that pin down the semantics of the pipelined scheduler.
//!
//! [`sync_ga_sgd`] trains the whole network as one module with gradient
//! accumulation. [`delayed_replay`] keeps every past parameter snapshot and,
//! for each module and accumulation slot, recomputes the delayed gradient
//! with a full forward/backward pass on the snapshot the scheduler would have
//! used. Neither is fast; both exist to be compared against.

mod compare;
mod replay;
mod sync;

pub use compare::{compare_traces, ComparisonReport};
pub use replay::{delayed_replay, delayed_replay_with_history, ParamHistory};
pub use sync::sync_ga_sgd;
