//! Learning-rate schedules, indexed by update `s`.

use crate::error::{Error, Result};
use crate::staleness::{constant_lr, BoundInputs};

#[derive(Debug, Clone, PartialEq)]
pub enum LrSchedule {
    Constant {
        lr: f64,
    },
    /// Linear per-update warm-up over `warmup_epochs`, then `base · factor^n`
    /// where `n` counts the milestones (in epochs) already reached.
    StepDecay {
        base: f64,
        milestones: Vec<f64>,
        factor: f64,
        warmup_epochs: f64,
    },
    /// `c / (s + 1)`: divergent sum, summable squares.
    Harmonic {
        c: f64,
    },
    /// The constant rate that balances the constant-rate gradient bound.
    ConstantTheoretical {
        epsilon: f64,
        grad_bound: f64,
        lipschitz: f64,
        initial_gap: f64,
        updates: u64,
        accumulation: u64,
        staleness_sum: f64,
    },
}

/// `0.1 · b · M / 256`: base rate for batch size `b` and `M` accumulation steps.
pub fn scaled_base_lr(batch_size: usize, accumulation: usize) -> f64 {
    0.1 * (batch_size * accumulation) as f64 / 256.0
}

/// Epochs consumed before update `s`, with one epoch of `batches_per_epoch`
/// batches and `M` batches per update.
pub fn epochs_elapsed(update: u64, accumulation: usize, batches_per_epoch: usize) -> f64 {
    (update * accumulation as u64) as f64 / batches_per_epoch as f64
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            LrSchedule::Constant { lr } if !(*lr > 0.0 && lr.is_finite()) => {
                bad(format!("learning rate {lr} must be positive"))
            }
            LrSchedule::StepDecay {
                base,
                milestones,
                factor,
                warmup_epochs,
            } => {
                if !(*base > 0.0) || !(*factor > 0.0 && *factor <= 1.0) || *warmup_epochs < 0.0 {
                    return bad(format!(
                        "step decay needs base > 0, factor in (0, 1], warm-up >= 0; got {base}, {factor}, {warmup_epochs}"
                    ));
                }
                if milestones.windows(2).any(|w| w[0] > w[1]) {
                    return bad("milestones must be sorted".into());
                }
                Ok(())
            }
            LrSchedule::Harmonic { c } if !(*c > 0.0) => {
                bad(format!("harmonic scale {c} must be positive"))
            }
            LrSchedule::ConstantTheoretical { .. } => self.theoretical().map(|_| ()),
            _ => Ok(()),
        }
    }

    fn theoretical(&self) -> Result<f64> {
        match *self {
            LrSchedule::ConstantTheoretical {
                epsilon,
                grad_bound,
                lipschitz,
                initial_gap,
                updates,
                accumulation,
                staleness_sum,
            } => {
                let inputs = BoundInputs {
                    lr: 0.0,
                    grad_norm_sq: 0.0,
                    grad_bound,
                    lipschitz,
                    accumulation,
                    staleness_sum,
                    updates,
                    initial_gap,
                    epsilon,
                };
                Ok(constant_lr(&inputs)?.lr)
            }
            _ => unreachable!(),
        }
    }

    /// Rate for update `s` when one epoch spans `updates_per_epoch` updates.
    pub fn lr_at(&self, s: u64, updates_per_epoch: f64) -> f64 {
        match self {
            LrSchedule::Constant { lr } => *lr,
            LrSchedule::StepDecay {
                base,
                milestones,
                factor,
                warmup_epochs,
            } => {
                let window = (warmup_epochs * updates_per_epoch).ceil() as u64;
                if s < window {
                    return base * (s + 1) as f64 / window as f64;
                }
                let epochs = s as f64 / updates_per_epoch;
                let passed = milestones.iter().filter(|&&m| epochs >= m).count();
                base * factor.powi(passed as i32)
            }
            LrSchedule::Harmonic { c } => c / (s + 1) as f64,
            LrSchedule::ConstantTheoretical { .. } => self.theoretical().unwrap_or(f64::NAN),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_rule() {
        assert_eq!(scaled_base_lr(32, 2), 0.025);
        assert_eq!(scaled_base_lr(256, 1), 0.1);
    }

    #[test]
    fn harmonic_values() {
        assert_eq!(LrSchedule::Harmonic { c: 1.0 }.lr_at(3, 1.0), 0.25);
    }

    #[test]
    fn step_decay_after_one_milestone() {
        let sched = LrSchedule::StepDecay {
            base: 0.1,
            milestones: vec![10.0, 20.0],
            factor: 0.1,
            warmup_epochs: 0.0,
        };
        assert_eq!(sched.lr_at(0, 1.0), 0.1);
        assert!((sched.lr_at(15, 1.0) - 0.01).abs() < 1e-15);
        assert!((sched.lr_at(25, 1.0) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn warmup_is_linear_per_update() {
        let sched = LrSchedule::StepDecay {
            base: 0.4,
            milestones: vec![],
            factor: 0.1,
            warmup_epochs: 3.0,
        };
        // 2 updates per epoch -> 6 warm-up updates from base/6 to base
        let rates: Vec<f64> = (0..8).map(|s| sched.lr_at(s, 2.0)).collect();
        assert!((rates[0] - 0.4 / 6.0).abs() < 1e-15);
        assert!((rates[5] - 0.4).abs() < 1e-15);
        assert!(rates.windows(2).take(5).all(|w| w[1] > w[0]));
        assert_eq!(rates[6], 0.4);
    }

    #[test]
    fn theoretical_constant() {
        let sched = LrSchedule::ConstantTheoretical {
            epsilon: 1.0,
            grad_bound: 1.0,
            lipschitz: 1.0,
            initial_gap: 1.0,
            updates: 4,
            accumulation: 1,
            staleness_sum: 0.0,
        };
        assert_eq!(sched.lr_at(0, 1.0), 0.5);
        assert_eq!(sched.lr_at(100, 1.0), 0.5);
    }

    #[test]
    fn epochs_bookkeeping() {
        assert_eq!(epochs_elapsed(5, 2, 10), 1.0);
    }

    #[test]
    fn validation() {
        assert!(LrSchedule::Harmonic { c: 0.0 }.validate().is_err());
        assert!(LrSchedule::Constant { lr: -1.0 }.validate().is_err());
        assert!(LrSchedule::StepDecay {
            base: 0.1,
            milestones: vec![3.0, 1.0],
            factor: 0.1,
            warmup_epochs: 0.0
        }
        .validate()
        .is_err());
    }
}
