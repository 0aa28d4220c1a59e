//! Hidden-layer activations, including the learned subnetwork activation.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::autodiff::batch::{Dual, Graph, Var, RHO_PARAMS};
use crate::autodiff::{Node, Op, Result as AdResult, Tape, TapeValue};

/// A width-3 one-hidden-layer ReLU network used as an activation:
/// `rho(h) = w2 . relu(w1 h + b1) + b2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnedActivation {
    pub w1: [f64; 3],
    pub b1: [f64; 3],
    pub w2: [f64; 3],
    pub b2: f64,
}

impl Default for LearnedActivation {
    fn default() -> Self {
        Self::initial()
    }
}

impl LearnedActivation {
    /// `w1 = [1, 1, 1]`, `b1 = [-0.2, -0.1, 0]`, `w2 = [1, 1, -1]`, `b2 = 0`.
    pub fn initial() -> Self {
        Self {
            w1: [1.0, 1.0, 1.0],
            b1: [-0.2, -0.1, 0.0],
            w2: [1.0, 1.0, -1.0],
            b2: 0.0,
        }
    }

    /// Flat layout `[w1, b1, w2, b2]`.
    pub fn to_array(&self) -> [f64; RHO_PARAMS] {
        let mut a = [0.0; RHO_PARAMS];
        a[..3].copy_from_slice(&self.w1);
        a[3..6].copy_from_slice(&self.b1);
        a[6..9].copy_from_slice(&self.w2);
        a[9] = self.b2;
        a
    }

    pub fn from_slice(p: &[f64]) -> Self {
        Self {
            w1: [p[0], p[1], p[2]],
            b1: [p[3], p[4], p[5]],
            w2: [p[6], p[7], p[8]],
            b2: p[9],
        }
    }

    pub fn eval(&self, h: f64) -> f64 {
        let mut acc = self.b2;
        for k in 0..3 {
            let pre = self.w1[k] * h + self.b1[k];
            if pre > 0.0 {
                acc += self.w2[k] * pre;
            }
        }
        acc
    }

    /// Input values where a hidden unit switches on or off.
    pub fn breakpoints(&self) -> Vec<f64> {
        (0..3)
            .filter(|&k| self.w1[k] != 0.0)
            .map(|k| -self.b1[k] / self.w1[k])
            .collect()
    }

    /// Tabulates `rho` on `n` evenly spaced points of `[lo, hi]`.
    pub fn sample(&self, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
        sample_grid(lo, hi, n)
            .into_iter()
            .map(|h| (h, self.eval(h)))
            .collect()
    }
}

/// Default activation table: 601 points on `[-3, 3]`.
pub fn sample_activation(a: &LearnedActivation) -> Vec<(f64, f64)> {
    a.sample(-3.0, 3.0, 601)
}

pub(crate) fn sample_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

/// Records `rho(h)` on a tape. `params` holds `[w1, b1, w2, b2]` as nodes, so
/// all ten scalars receive gradients.
pub fn rho_eval<S: TapeValue>(tape: &mut Tape, params: &[Node], h: S) -> AdResult<S> {
    debug_assert_eq!(params.len(), RHO_PARAMS);
    let mut acc = S::lift(tape, params[9])?;
    for k in 0..3 {
        let w1 = S::lift(tape, params[k])?;
        let b1 = S::lift(tape, params[3 + k])?;
        let w2 = S::lift(tape, params[6 + k])?;
        let pre = S::apply(tape, Op::Mul, &[w1, h])?;
        let pre = S::apply(tape, Op::Add, &[pre, b1])?;
        let act = S::apply(tape, Op::Relu, &[pre])?;
        let term = S::apply(tape, Op::Mul, &[w2, act])?;
        acc = S::apply(tape, Op::Add, &[acc, term])?;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationSpec {
    Relu,
    Sine { omega0: f64 },
    Gaussian { s0: f64 },
    /// `cos(omega0 z) exp(-(s0 z)^2)`.
    GaborReal { omega0: f64, s0: f64 },
    /// One or more subnetworks; column `j` of the layer uses `subnets[j % r]`.
    Learned { subnets: Vec<LearnedActivation> },
    Identity,
}

impl ActivationSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::InvalidSpec(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            ActivationSpec::Sine { omega0 } => positive("omega0", omega0),
            ActivationSpec::Gaussian { s0 } => positive("s0", s0),
            ActivationSpec::GaborReal { omega0, s0 } => {
                positive("omega0", omega0)?;
                positive("s0", s0)
            }
            ActivationSpec::Learned { ref subnets } if subnets.is_empty() => Err(
                ModelError::InvalidSpec("learned activation needs at least one subnetwork".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, ActivationSpec::Learned { .. })
    }

    /// Closed-form value for the neuron in column `column`.
    pub fn eval(&self, z: f64, column: usize) -> f64 {
        match self {
            ActivationSpec::Relu => z.max(0.0),
            ActivationSpec::Sine { omega0 } => (omega0 * z).sin(),
            ActivationSpec::Gaussian { s0 } => (-(s0 * z).powi(2)).exp(),
            ActivationSpec::GaborReal { omega0, s0 } => (omega0 * z).cos() * (-(s0 * z).powi(2)).exp(),
            ActivationSpec::Learned { subnets } => subnets[column % subnets.len()].eval(z),
            ActivationSpec::Identity => z,
        }
    }

    /// Records the activation of column `column` on a scalar tape. `params`
    /// are this layer's subnetwork parameters (`r * 10` nodes), if learned.
    pub fn apply_on_tape<S: TapeValue>(
        &self,
        tape: &mut Tape,
        z: S,
        column: usize,
        params: &[Node],
    ) -> AdResult<S> {
        let scaled = |tape: &mut Tape, c: f64, z: S| -> AdResult<S> {
            let c = S::constant(tape, c)?;
            S::apply(tape, Op::Mul, &[c, z])
        };
        let gauss = |tape: &mut Tape, s0: f64, z: S| -> AdResult<S> {
            let q = scaled(tape, s0, z)?;
            let q = S::apply(tape, Op::Square, &[q])?;
            let q = S::apply(tape, Op::Neg, &[q])?;
            S::apply(tape, Op::Exp, &[q])
        };
        match *self {
            ActivationSpec::Relu => S::apply(tape, Op::Relu, &[z]),
            ActivationSpec::Sine { omega0 } => {
                let a = scaled(tape, omega0, z)?;
                S::apply(tape, Op::Sin, &[a])
            }
            ActivationSpec::Gaussian { s0 } => gauss(tape, s0, z),
            ActivationSpec::GaborReal { omega0, s0 } => {
                let a = scaled(tape, omega0, z)?;
                let c = S::apply(tape, Op::Cos, &[a])?;
                let e = gauss(tape, s0, z)?;
                S::apply(tape, Op::Mul, &[c, e])
            }
            ActivationSpec::Learned { ref subnets } => {
                let k = column % subnets.len();
                rho_eval(tape, &params[k * RHO_PARAMS..(k + 1) * RHO_PARAMS], z)
            }
            ActivationSpec::Identity => Ok(z),
        }
    }

    /// Batched activation. `params` is the `r x 10` subnetwork block when learned.
    pub fn apply_batch(&self, g: &mut Graph, z: &Dual, params: Option<Var>) -> Dual {
        let gauss = |g: &mut Graph, s0: f64, z: &Dual| {
            let q = g.d_scale(z, s0);
            let q = g.d_square(&q);
            let q = g.d_scale(&q, -1.0);
            g.d_exp(&q)
        };
        match *self {
            ActivationSpec::Relu => g.d_relu(z),
            ActivationSpec::Sine { omega0 } => {
                let a = g.d_scale(z, omega0);
                g.d_sin(&a)
            }
            ActivationSpec::Gaussian { s0 } => gauss(g, s0, z),
            ActivationSpec::GaborReal { omega0, s0 } => {
                let a = g.d_scale(z, omega0);
                let c = g.d_cos(&a);
                let e = gauss(g, s0, z);
                g.d_mul(&c, &e)
            }
            ActivationSpec::Learned { .. } => {
                g.d_rho(z, params.expect("learned activation needs its parameter block"))
            }
            ActivationSpec::Identity => z.clone(),
        }
    }
}
