//! Neural fields with nested learnable activations.

pub mod autodiff;
pub mod models;
pub mod operators;
pub mod metrics;
pub mod training;
pub mod formats;
pub mod harness;
pub mod verify;
