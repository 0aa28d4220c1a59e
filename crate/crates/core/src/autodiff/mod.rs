//! Automatic differentiation.
//!
//! Two engines share the same semantics:
//!
//! * [`Tape`] records one node per scalar. It is the reference engine: every
//!   primitive has an exact reverse rule and a forward-mode tangent rule whose
//!   tangents are themselves tape nodes, so derivatives of tangents
//!   (forward-over-reverse) come out of a single [`Tape::backward`] call.
//! * [`batch::Graph`] records one node per matrix (rows are samples). Training
//!   runs on it; it is checked against the scalar tape and against finite
//!   differences.

pub mod batch;
mod check;
mod tape;

pub use check::{compare_with_finite_differences, finite_difference_check, relative_error, FdEntry, FdReport};
pub use tape::{DualNode, GradientMap, Node, Op, Tape, TapeValue};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("non-finite input value {0}")]
    NonFiniteInput(f64),
    #[error("{op:?} produced a non-finite value from {inputs:?}")]
    NonFiniteResult { op: Op, inputs: Vec<f64> },
    #[error("{op:?} takes {expected} input(s), got {got}")]
    Arity { op: Op, expected: usize, got: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative value {0}")]
    NegativeSqrt(f64),
    #[error("node {0} does not belong to this tape")]
    ForeignNode(usize),
    #[error("node {0} is not a leaf")]
    NotALeaf(usize),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
