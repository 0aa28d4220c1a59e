use serde::{Deserialize, Serialize};

use super::TrainingError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleKind {
    Constant,
    /// Geometric decay reaching `final_fraction` of the initial rate at the
    /// last epoch.
    Exponential { final_fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub initial_lr: f64,
    pub total_epochs: usize,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, initial_lr: f64, total_epochs: usize) -> Result<Self, TrainingError> {
        if !(initial_lr.is_finite() && initial_lr > 0.0) {
            return Err(TrainingError::InvalidConfig(format!("learning rate must be positive, got {initial_lr}")));
        }
        if let ScheduleKind::Exponential { final_fraction } = kind {
            if !(final_fraction.is_finite() && final_fraction > 0.0) {
                return Err(TrainingError::InvalidConfig(format!(
                    "final_fraction must be positive, got {final_fraction}"
                )));
            }
        }
        Ok(Self {
            kind,
            initial_lr,
            total_epochs,
        })
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.initial_lr,
            ScheduleKind::Exponential { final_fraction } => {
                if self.total_epochs <= 1 {
                    return self.initial_lr;
                }
                let progress = epoch.min(self.total_epochs - 1) as f64 / (self.total_epochs - 1) as f64;
                self.initial_lr * final_fraction.powf(progress)
            }
        }
    }
}
