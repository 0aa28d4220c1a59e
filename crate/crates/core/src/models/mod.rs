//! Coordinate encodings, activations and network architectures.

mod activation;
mod encoding;
mod model;

pub use activation::{rho_eval, sample_activation, ActivationSpec, LearnedActivation};
pub use encoding::{EncodingKind, EncodingSpec};
pub use model::{build_baseline, build_nestnet, AffineLayer, ArchKind, EncodedInput, FilterLayer, Model, ModelKind, ModelSpec};

use crate::autodiff::AutodiffError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("input has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter vector has length {got}, model has {expected} parameters")]
    ParamCount { expected: usize, got: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
