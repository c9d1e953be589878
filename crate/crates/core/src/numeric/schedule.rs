use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Optimizer settings: linear warmup followed by cosine annealing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSchedule {
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            base_lr: 5e-3,
            warmup_epochs: 5,
            total_epochs: 20,
            batch_size: 64,
            momentum: 0.0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr.is_finite() && self.base_lr >= 0.0) {
            return Err(Error::Config(format!("base_lr must be finite and >= 0, got {}", self.base_lr)));
        }
        if self.warmup_epochs > self.total_epochs {
            return Err(Error::Config(format!(
                "warmup_epochs ({}) exceeds total_epochs ({})",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }

    /// Learning rate used throughout `epoch` (0-based).
    pub fn lr_at_epoch(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(Error::Argument(format!(
                "epoch {epoch} outside schedule of {} epochs",
                self.total_epochs
            )));
        }
        if epoch < self.warmup_epochs {
            return Ok(self.base_lr * (epoch + 1) as f64 / self.warmup_epochs as f64);
        }
        let span = (self.total_epochs - self.warmup_epochs) as f64;
        let t = (epoch - self.warmup_epochs) as f64 / span;
        Ok(self.base_lr * 0.5 * (1.0 + (PI * t).cos()))
    }
}

pub fn lr_at_epoch(schedule: &TrainSchedule, epoch: usize) -> Result<f64> {
    schedule.lr_at_epoch(epoch)
}
