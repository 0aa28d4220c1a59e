//! Losses, the Adam optimizer, learning-rate schedules and the training loop.

mod adam;
mod loss;
mod schedule;
mod train;

pub use adam::AdamState;
pub use loss::{
    l2_loss, pinn_loss, ExactConvection, Field, FieldFit, LossSpec, ModelField, Objective, PinnDomain, PinnObjective,
    PinnTerms, PinnWeights,
};
pub use schedule::{Schedule, ScheduleKind};
pub use train::{train, EpochStats};

use crate::autodiff::AutodiffError;
use crate::models::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum TrainingError {
    #[error("non-finite gradient {value} at parameter {index}")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("loss became non-finite ({value}) at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, value: f64 },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
