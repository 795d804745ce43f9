use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup from `init_lr` to `peak_lr`, then per-step exponential decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub init_lr: f64,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub decay_rate: f64,
}

impl ScheduleConfig {
    /// 1e-9 → 1e-3 over 16k steps.
    pub fn full_pretrain() -> Self {
        Self {
            init_lr: 1e-9,
            peak_lr: 1e-3,
            warmup_steps: 16_000,
            decay_rate: 0.9999,
        }
    }

    /// Finetuning starts from 1e-4; its warmup length is a free choice.
    pub fn full_finetune() -> Self {
        Self {
            init_lr: 1e-4,
            peak_lr: 1e-3,
            warmup_steps: 500,
            decay_rate: 0.9999,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.init_lr > 0.0 && self.init_lr <= self.peak_lr && self.peak_lr.is_finite()) {
            return Err(Error::InvalidConfig("schedule needs 0 < init_lr <= peak_lr".into()));
        }
        if self.warmup_steps == 0 {
            return Err(Error::InvalidConfig("warmup_steps must be positive".into()));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(Error::InvalidConfig("decay_rate must be in (0, 1]".into()));
        }
        Ok(())
    }
}

pub fn lr_at(schedule: &ScheduleConfig, step: u64) -> f64 {
    if step <= schedule.warmup_steps {
        let frac = step as f64 / schedule.warmup_steps as f64;
        schedule.init_lr + (schedule.peak_lr - schedule.init_lr) * frac
    } else {
        schedule.peak_lr * schedule.decay_rate.powf((step - schedule.warmup_steps) as f64)
    }
}
