//! Staleness arithmetic for pipelined training with gradient accumulation.
//!
//! With `M` accumulation steps, parameter version `s` is live for batch
//! indices `M·s .. M·s + M - 1`. Module `k` of `K` back-propagates batch
//! `M·s + j - 2(K - k)` while it forwards batch `M·s + j`, so the gradient it
//! accumulates into update `s + 1` lags by
//!
//! ```text
//! d(k, j) = s - floor((M·s + j - 2(K - k)) / M) = ceil((2(K - k) - j) / M)
//! ```
//!
//! versions. Everything here is exact integer or rational arithmetic.

mod bounds;
mod estimate;

pub use bounds::{
    constant_lr, constant_lr_gradient_bound, ergodic_gradient_bound, one_step_descent_bound, ConstantLr,
    staleness_factor, BoundInputs,
};
pub use estimate::{estimate_grad_bound, estimate_lipschitz_secant};

use num_rational::Ratio;

use crate::error::{Error, Result};

/// Exact rational used for averaged staleness.
pub type Rational = Ratio<i64>;

/// Position of one accumulated gradient: module `k` of `K`, update `s`, slot `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StalenessQuery {
    /// Split size `K`.
    pub splits: u64,
    /// Module index `k`, 1-based.
    pub module: u64,
    /// Accumulation steps `M`.
    pub accumulation: u64,
    /// Update index `s`.
    pub update: u64,
    /// Slot within the accumulation group, `0..M`.
    pub slot: u64,
}

impl StalenessQuery {
    pub fn new(splits: u64, module: u64, accumulation: u64, update: u64, slot: u64) -> Self {
        Self {
            splits,
            module,
            accumulation,
            update,
            slot,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.splits == 0 || self.module == 0 || self.module > self.splits {
            return Err(Error::Domain(format!(
                "module {} out of range for split size {}",
                self.module, self.splits
            )));
        }
        if self.accumulation == 0 {
            return Err(Error::Domain("accumulation steps must be at least 1".into()));
        }
        if self.slot >= self.accumulation {
            return Err(Error::Domain(format!(
                "slot {} out of range for {} accumulation steps",
                self.slot, self.accumulation
            )));
        }
        Ok(())
    }

    /// Wrapped batch index `U_s = M·s`.
    pub fn wrapped_index(&self) -> u64 {
        self.accumulation * self.update
    }

    /// Forward-slot batch index `U_s + j`.
    pub fn forward_batch(&self) -> u64 {
        self.wrapped_index() + self.slot
    }

    /// Batch whose gradient fills this slot; negative during pipeline fill.
    pub fn backward_batch(&self) -> i64 {
        self.forward_batch() as i64 - 2 * (self.splits - self.module) as i64
    }
}

/// Update-index gap `floor(t/M) - floor((t-d)/M)` between the parameters
/// current at batch `t` and those a gradient delayed by `d` batches used.
pub fn level_of_staleness(t: u64, d: u64, m: u64) -> Result<u64> {
    if m == 0 {
        return Err(Error::Domain("accumulation steps must be at least 1".into()));
    }
    if d > t {
        return Err(Error::Domain(format!("delay {d} exceeds batch index {t}")));
    }
    Ok(t / m - (t - d) / m)
}

/// Staleness `d(k, j)` of the gradient in slot `j` of update `s + 1`.
pub fn module_staleness(q: &StalenessQuery) -> Result<u64> {
    q.validate()?;
    let m = q.accumulation as i64;
    let s = q.update as i64;
    let d = s - q.backward_batch().div_euclid(m);
    Ok(d as u64)
}

/// Closed form `max(0, ceil((2(K-k) - j) / M))`, independent of `s`.
pub fn steady_state_delay(splits: u64, module: u64, accumulation: u64, slot: u64) -> Result<u64> {
    StalenessQuery::new(splits, module, accumulation, 0, slot).validate()?;
    let lag = 2 * (splits - module) as i64 - slot as i64;
    let m = accumulation as i64;
    Ok((-(-lag).div_euclid(m)).max(0) as u64)
}

/// Parameter version `max(0, s - d(k, j))` the slot's gradient was computed on.
pub fn effective_version(q: &StalenessQuery) -> Result<u64> {
    let d = module_staleness(q)?;
    Ok(q.update.saturating_sub(d))
}

/// Mean of `d(k, j)` over one accumulation group.
pub fn averaged_los(splits: u64, module: u64, accumulation: u64) -> Result<Rational> {
    let mut total = 0i64;
    for j in 0..accumulation {
        total += steady_state_delay(splits, module, accumulation, j)? as i64;
    }
    if accumulation == 0 {
        return Err(Error::Domain("accumulation steps must be at least 1".into()));
    }
    Ok(Rational::new(total, accumulation as i64))
}

/// `Σ_k d̄_k` over all modules.
pub fn total_averaged_los(splits: u64, accumulation: u64) -> Result<Rational> {
    if splits == 0 {
        return Err(Error::Domain("split size must be at least 1".into()));
    }
    (1..=splits).try_fold(Rational::from_integer(0), |acc, k| {
        Ok(acc + averaged_los(splits, k, accumulation)?)
    })
}

pub fn rational_to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: u64, j: u64, k_split: u64, k: u64, m: u64) -> u64 {
        module_staleness(&StalenessQuery::new(k_split, k, m, s, j)).unwrap()
    }

    #[test]
    fn level_of_staleness_examples() {
        assert_eq!(level_of_staleness(7, 3, 2).unwrap(), 1);
        assert_eq!(level_of_staleness(5, 0, 4).unwrap(), 0);
        assert_eq!(level_of_staleness(10, 10, 1).unwrap(), 10);
        assert!(level_of_staleness(2, 3, 1).is_err());
        assert!(level_of_staleness(2, 1, 0).is_err());
    }

    #[test]
    fn three_module_four_step_group() {
        let got: Vec<u64> = (0..4).map(|j| d(1, j, 3, 2, 4)).collect();
        assert_eq!(got, vec![1, 1, 0, 0]);
    }

    #[test]
    fn top_module_has_no_delay() {
        for m in 1..6 {
            for j in 0..m {
                for s in 0..5 {
                    assert_eq!(d(s, j, 5, 5, m), 0);
                }
            }
        }
    }

    #[test]
    fn no_accumulation_gives_full_delay() {
        for s in 14..30 {
            assert_eq!(d(s, 0, 8, 1, 1), 14);
        }
    }

    #[test]
    fn effective_version_clamps() {
        let q = StalenessQuery::new(3, 1, 1, 0, 0);
        assert_eq!(effective_version(&q).unwrap(), 0);
        // K=2, k=1, M=1: d=2, so update 5 sees version 3
        let q = StalenessQuery::new(2, 1, 1, 5, 0);
        assert_eq!(module_staleness(&q).unwrap(), 2);
        assert_eq!(effective_version(&q).unwrap(), 3);
    }

    #[test]
    fn averaged_examples() {
        assert_eq!(averaged_los(3, 2, 4).unwrap(), Rational::new(1, 2));
        assert_eq!(averaged_los(8, 1, 1).unwrap(), Rational::from_integer(14));
        assert_eq!(averaged_los(8, 1, 4).unwrap(), Rational::new(7, 2));
    }

    #[test]
    fn invalid_queries() {
        assert!(module_staleness(&StalenessQuery::new(3, 0, 1, 0, 0)).is_err());
        assert!(module_staleness(&StalenessQuery::new(3, 4, 1, 0, 0)).is_err());
        assert!(module_staleness(&StalenessQuery::new(3, 1, 2, 0, 2)).is_err());
        assert!(averaged_los(3, 1, 0).is_err());
    }
}
