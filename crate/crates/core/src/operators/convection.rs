//! The periodic 1D convection problem `u_t + beta u_x = 0` with
//! `u(x, 0) = sin(x)` on `[0, 2 pi] x [0, 1]`.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::OperatorError;

pub const X_MAX: f64 = 2.0 * PI;
pub const T_MAX: f64 = 1.0;

/// Exact solution `sin(x - beta t)`.
pub fn convection_exact(x: f64, t: f64, beta: f64) -> f64 {
    (x - beta * t).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvectionProblem {
    pub beta: f64,
    pub n_ic: usize,
    pub n_bc: usize,
    pub n_col: usize,
    pub seed: u64,
}

impl ConvectionProblem {
    pub fn validate(&self) -> Result<(), OperatorError> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(OperatorError::InvalidParameter(format!("beta must be positive, got {}", self.beta)));
        }
        if self.n_ic == 0 || self.n_bc == 0 || self.n_col == 0 {
            return Err(OperatorError::InvalidParameter("sample counts must be positive".into()));
        }
        Ok(())
    }
}

/// Point sets as `n x 2` arrays of `(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvectionPoints {
    /// `(x_i, 0)`, evenly spaced over `[0, 2 pi)`.
    pub ic: Array2<f64>,
    /// `(0, t_j)`; the paired right-boundary point is `(2 pi, t_j)`.
    pub bc_left: Array2<f64>,
    pub bc_right: Array2<f64>,
    /// Uniform random interior points.
    pub collocation: Array2<f64>,
}

pub fn sample_convection_points(p: &ConvectionProblem) -> Result<ConvectionPoints, OperatorError> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let ic = Array2::from_shape_fn((p.n_ic, 2), |(i, c)| if c == 0 { X_MAX * i as f64 / p.n_ic as f64 } else { 0.0 });
    let ts: Vec<f64> = (0..p.n_bc).map(|_| rng.random_range(0.0..T_MAX)).collect();
    let bc_left = Array2::from_shape_fn((p.n_bc, 2), |(i, c)| if c == 0 { 0.0 } else { ts[i] });
    let bc_right = Array2::from_shape_fn((p.n_bc, 2), |(i, c)| if c == 0 { X_MAX } else { ts[i] });
    let mut collocation = Array2::zeros((p.n_col, 2));
    for mut row in collocation.rows_mut() {
        row[0] = rng.random_range(0.0..X_MAX);
        row[1] = rng.random_range(0.0..T_MAX);
    }
    Ok(ConvectionPoints {
        ic,
        bc_left,
        bc_right,
        collocation,
    })
}

/// `nx x nt` evaluation grid including both ends of each axis, rows ordered
/// with `t` fastest.
pub fn convection_grid(nx: usize, nt: usize) -> Array2<f64> {
    let step = |n: usize, max: f64, i: usize| if n == 1 { 0.0 } else { max * i as f64 / (n - 1) as f64 };
    Array2::from_shape_fn((nx * nt, 2), |(r, c)| {
        if c == 0 {
            step(nx, X_MAX, r / nt)
        } else {
            step(nt, T_MAX, r % nt)
        }
    })
}
