use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Linear warmup from `base_lr` to `peak_lr`, then geometric annealing by
/// `anneal_factor` per epoch starting at `anneal_start_epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub peak_lr: f64,
    pub warmup_epochs: usize,
    #[serde(default = "default_anneal_factor")]
    pub anneal_factor: f64,
    pub anneal_start_epoch: usize,
}

fn default_anneal_factor() -> f64 {
    std::f64::consts::FRAC_1_SQRT_2
}

impl LrSchedule {
    /// A flat learning rate.
    pub fn constant(lr: f64) -> Self {
        Self {
            base_lr: lr,
            peak_lr: lr,
            warmup_epochs: 0,
            anneal_factor: 1.0,
            anneal_start_epoch: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.base_lr) || !ok(self.peak_lr) || !ok(self.anneal_factor) {
            return Err(Error::InvalidArgument(format!(
                "learning rates and anneal factor must be positive and finite: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        lr_at(self, epoch)
    }
}

pub fn lr_at(schedule: &LrSchedule, epoch: usize) -> f64 {
    let ramp = if schedule.warmup_epochs == 0 || epoch >= schedule.warmup_epochs {
        schedule.peak_lr
    } else {
        let frac = epoch as f64 / schedule.warmup_epochs as f64;
        schedule.base_lr + (schedule.peak_lr - schedule.base_lr) * frac
    };
    let decay_steps = epoch.saturating_sub(schedule.anneal_start_epoch);
    ramp * schedule.anneal_factor.powi(decay_steps as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn large_batch() -> LrSchedule {
        LrSchedule {
            base_lr: 0.32,
            peak_lr: 3.2,
            warmup_epochs: 10,
            anneal_factor: std::f64::consts::FRAC_1_SQRT_2,
            anneal_start_epoch: 10,
        }
    }

    #[test]
    fn warmup_endpoints() {
        let s = large_batch();
        assert_eq!(lr_at(&s, 0), 0.32);
        assert!((lr_at(&s, 10) - 3.2).abs() < 1e-15);
        assert!((lr_at(&s, 5) - 1.76).abs() < 1e-12);
    }

    #[test]
    fn two_anneal_steps_halve() {
        let s = large_batch();
        assert!((lr_at(&s, 12) - 1.6).abs() < 1e-12);
    }

    #[test]
    fn constant_between_disjoint_phases() {
        let s = LrSchedule {
            anneal_start_epoch: 15,
            ..large_batch()
        };
        assert!((lr_at(&s, 12) - 3.2).abs() < 1e-15);
        assert!((lr_at(&s, 14) - 3.2).abs() < 1e-15);
        assert!(lr_at(&s, 16) < 3.2);
    }

    #[test]
    fn always_positive() {
        let s = large_batch();
        assert!((0..500).all(|e| lr_at(&s, e) > 0.0));
        assert!(LrSchedule::constant(0.0).validate().is_err());
    }
}
