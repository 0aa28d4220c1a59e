//! Loss construction on both autodiff engines.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::TrainingError;
use crate::autodiff::batch::{Graph, LinearMap, Var};
use crate::autodiff::{Node, Op, Result as AdResult, Tape, TapeValue};
use crate::models::{EncodedInput, Model};
use crate::operators::ConvectionPoints;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinnWeights {
    pub ic: f64,
    pub bc: f64,
    pub pde: f64,
}

impl Default for PinnWeights {
    fn default() -> Self {
        Self {
            ic: 1.0,
            bc: 1.0,
            pde: 1.0,
        }
    }
}

impl PinnWeights {
    pub fn validate(&self) -> Result<(), TrainingError> {
        if [self.ic, self.bc, self.pde].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(TrainingError::InvalidConfig(format!("loss weights must be >= 0, got {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    PointwiseL2,
    PinnConvection { beta: f64, weights: PinnWeights },
}

/// Mean of squared differences between flattened predictions and targets.
pub fn l2_loss(tape: &mut Tape, preds: &[Node], targets: &[f64]) -> Result<Node, TrainingError> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(TrainingError::LengthMismatch(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let mut terms = Vec::with_capacity(preds.len());
    for (&p, &t) in preds.iter().zip(targets) {
        let t = tape.constant(t)?;
        let d = tape.sub(p, t)?;
        terms.push(tape.unary(Op::Square, d)?);
    }
    let s = tape.sum(&terms)?;
    let inv = tape.constant(1.0 / preds.len() as f64)?;
    Ok(tape.mul(s, inv)?)
}

/// Affine map of the convection domain `[0, 2 pi] x [0, 1]` onto `[-1, 1]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PinnDomain;

impl PinnDomain {
    pub const X_SCALE: f64 = 1.0 / PI;
    pub const T_SCALE: f64 = 2.0;

    /// Raw `(x, t)` rows to model coordinates.
    pub fn normalize(points: &Array2<f64>) -> Array2<f64> {
        let mut out = points.clone();
        for mut r in out.rows_mut() {
            r[0] = r[0] * Self::X_SCALE - 1.0;
            r[1] = r[1] * Self::T_SCALE - 1.0;
        }
        out
    }

    /// Tangent seeds giving `u_t` then `u_x` in raw units.
    pub fn seeds() -> [(usize, f64); 2] {
        [(1, Self::T_SCALE), (0, Self::X_SCALE)]
    }
}

/// A scalar field `u(x, t)` that can be recorded on a tape.
pub trait Field {
    fn eval<S: TapeValue>(&self, tape: &mut Tape, x: S, t: S) -> AdResult<S>;
}

/// A model with its parameter nodes, taking raw `(x, t)`.
pub struct ModelField<'a> {
    pub model: &'a Model,
    pub params: &'a [Node],
}

impl Field for ModelField<'_> {
    fn eval<S: TapeValue>(&self, tape: &mut Tape, x: S, t: S) -> AdResult<S> {
        let affine = |tape: &mut Tape, v: S, a: f64| -> AdResult<S> {
            let a = S::constant(tape, a)?;
            let one = S::constant(tape, 1.0)?;
            let s = S::apply(tape, Op::Mul, &[a, v])?;
            S::apply(tape, Op::Sub, &[s, one])
        };
        let xn = affine(tape, x, PinnDomain::X_SCALE)?;
        let tn = affine(tape, t, PinnDomain::T_SCALE)?;
        match self.model.forward(tape, self.params, &[xn, tn]) {
            Ok(out) => Ok(out[0]),
            Err(crate::models::ModelError::Autodiff(e)) => Err(e),
            Err(e) => panic!("model does not accept (x, t) input: {e}"),
        }
    }
}

/// The exact solution `sin(x - beta t)` built from tape primitives.
pub struct ExactConvection {
    pub beta: f64,
}

impl Field for ExactConvection {
    fn eval<S: TapeValue>(&self, tape: &mut Tape, x: S, t: S) -> AdResult<S> {
        let b = S::constant(tape, self.beta)?;
        let bt = S::apply(tape, Op::Mul, &[b, t])?;
        let arg = S::apply(tape, Op::Sub, &[x, bt])?;
        S::apply(tape, Op::Sin, &[arg])
    }
}

/// The three loss terms and their weighted sum. Terms with zero weight are
/// not evaluated and read as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinnTerms<T> {
    pub ic: T,
    pub bc: T,
    pub pde: T,
    pub total: T,
}

fn mean_of(tape: &mut Tape, terms: &[Node]) -> AdResult<Node> {
    let s = tape.sum(terms)?;
    let inv = tape.constant(1.0 / terms.len() as f64)?;
    tape.mul(s, inv)
}

/// Composite convection loss on a scalar tape: initial condition
/// `u(x, 0) = sin x`, periodic boundary `u(0, t) = u(2 pi, t)`, and the
/// residual `u_t + beta u_x` from dual tangents.
pub fn pinn_loss<F: Field>(
    tape: &mut Tape,
    field: &F,
    points: &ConvectionPoints,
    beta: f64,
    weights: PinnWeights,
) -> Result<PinnTerms<Node>, TrainingError> {
    weights.validate()?;
    let zero = tape.constant(0.0)?;
    let mut ic = zero;
    if weights.ic > 0.0 {
        let mut terms = Vec::new();
        for r in points.ic.rows() {
            let x = tape.constant(r[0])?;
            let t = tape.constant(r[1])?;
            let u = field.eval(tape, x, t)?;
            let g = tape.constant(r[0].sin())?;
            let d = tape.sub(u, g)?;
            terms.push(tape.unary(Op::Square, d)?);
        }
        ic = mean_of(tape, &terms)?;
    }
    let mut bc = zero;
    if weights.bc > 0.0 {
        let mut terms = Vec::new();
        for (l, r) in points.bc_left.rows().into_iter().zip(points.bc_right.rows()) {
            let (xl, tl) = (tape.constant(l[0])?, tape.constant(l[1])?);
            let (xr, tr) = (tape.constant(r[0])?, tape.constant(r[1])?);
            let ul = field.eval(tape, xl, tl)?;
            let ur = field.eval(tape, xr, tr)?;
            let d = tape.sub(ul, ur)?;
            terms.push(tape.unary(Op::Square, d)?);
        }
        bc = mean_of(tape, &terms)?;
    }
    let mut pde = zero;
    if weights.pde > 0.0 {
        let b = tape.constant(beta)?;
        let mut terms = Vec::new();
        for r in points.collocation.rows() {
            let x = tape.leaf(r[0], false)?;
            let t = tape.leaf(r[1], false)?;
            let derivative = |tape: &mut Tape, sx: f64, st: f64| -> AdResult<Node> {
                let dx = tape.dual_seed(x, sx)?;
                let dt = tape.dual_seed(t, st)?;
                Ok(field.eval(tape, dx, dt)?.tangent)
            };
            let ut = derivative(tape, 0.0, 1.0)?;
            let ux = derivative(tape, 1.0, 0.0)?;
            let bux = tape.mul(b, ux)?;
            let res = tape.add(ut, bux)?;
            terms.push(tape.unary(Op::Square, res)?);
        }
        pde = mean_of(tape, &terms)?;
    }
    let mut total = zero;
    for (w, term) in [(weights.ic, ic), (weights.bc, bc), (weights.pde, pde)] {
        if w > 0.0 {
            let wn = tape.constant(w)?;
            let s = tape.mul(wn, term)?;
            total = tape.add(total, s)?;
        }
    }
    Ok(PinnTerms { ic, bc, pde, total })
}

/// A training objective on the batched graph.
pub trait Objective: Send + Sync {
    /// Records the loss for `model` with parameter nodes `params`; returns a
    /// `1 x 1` node.
    fn loss(&self, g: &mut Graph, model: &Model, params: &[Var]) -> Var;
}

/// Pointwise L2 between model outputs and targets, optionally after a linear
/// measurement operator applied to each output channel.
#[derive(Debug, Clone)]
pub struct FieldFit {
    input: EncodedInput,
    target: Array2<f64>,
    operator: Option<Arc<dyn LinearMap>>,
}

impl FieldFit {
    pub fn new(model: &Model, coords: &Array2<f64>, target: Array2<f64>) -> Result<Self, TrainingError> {
        Self::build(model, coords, None, target)
    }

    /// Fit through `operator`: the loss compares `operator(u(coords))` with
    /// `target`.
    pub fn through(
        model: &Model,
        coords: &Array2<f64>,
        operator: Arc<dyn LinearMap>,
        target: Array2<f64>,
    ) -> Result<Self, TrainingError> {
        Self::build(model, coords, Some(operator), target)
    }

    fn build(
        model: &Model,
        coords: &Array2<f64>,
        operator: Option<Arc<dyn LinearMap>>,
        target: Array2<f64>,
    ) -> Result<Self, TrainingError> {
        let rows = match &operator {
            Some(op) => {
                if op.cols() != coords.nrows() {
                    return Err(TrainingError::LengthMismatch(format!(
                        "operator takes {} values, {} coordinates given",
                        op.cols(),
                        coords.nrows()
                    )));
                }
                op.rows()
            }
            None => coords.nrows(),
        };
        if target.dim() != (rows, model.output_dim()) {
            return Err(TrainingError::LengthMismatch(format!(
                "target is {:?}, expected ({rows}, {})",
                target.dim(),
                model.output_dim()
            )));
        }
        Ok(Self {
            input: model.encode_inputs(coords, &[])?,
            target,
            operator,
        })
    }
}

impl Objective for FieldFit {
    fn loss(&self, g: &mut Graph, model: &Model, params: &[Var]) -> Var {
        let x = self.input.to_dual(g);
        let mut out = model.forward_batch(g, params, &x).value;
        if let Some(op) = &self.operator {
            out = g.linear(out, op.clone());
        }
        let t = g.constant(self.target.clone());
        let d = g.sub(out, t);
        let sq = g.square(d);
        g.mean(sq)
    }
}

/// The convection loss on the batched graph.
#[derive(Debug, Clone)]
pub struct PinnObjective {
    ic: EncodedInput,
    ic_target: Array2<f64>,
    bc_left: EncodedInput,
    bc_right: EncodedInput,
    collocation: EncodedInput,
    beta: f64,
    weights: PinnWeights,
}

impl PinnObjective {
    pub fn new(model: &Model, points: &ConvectionPoints, beta: f64, weights: PinnWeights) -> Result<Self, TrainingError> {
        weights.validate()?;
        let enc = |p: &Array2<f64>, seeds: &[(usize, f64)]| model.encode_inputs(&PinnDomain::normalize(p), seeds);
        Ok(Self {
            ic: enc(&points.ic, &[])?,
            ic_target: points.ic.column(0).mapv(f64::sin).insert_axis(ndarray::Axis(1)),
            bc_left: enc(&points.bc_left, &[])?,
            bc_right: enc(&points.bc_right, &[])?,
            collocation: enc(&points.collocation, &PinnDomain::seeds())?,
            beta,
            weights,
        })
    }

    pub fn terms(&self, g: &mut Graph, model: &Model, params: &[Var]) -> PinnTerms<Var> {
        let zero = g.constant(Array2::zeros((1, 1)));
        let sq_mean = |g: &mut Graph, a: Var, b: Var| {
            let d = g.sub(a, b);
            let s = g.square(d);
            g.mean(s)
        };
        let mut ic = zero;
        if self.weights.ic > 0.0 {
            let x = self.ic.to_dual(g);
            let u = model.forward_batch(g, params, &x).value;
            let target = g.constant(self.ic_target.clone());
            ic = sq_mean(g, u, target);
        }
        let mut bc = zero;
        if self.weights.bc > 0.0 {
            let l = self.bc_left.to_dual(g);
            let r = self.bc_right.to_dual(g);
            let ul = model.forward_batch(g, params, &l).value;
            let ur = model.forward_batch(g, params, &r).value;
            bc = sq_mean(g, ul, ur);
        }
        let mut pde = zero;
        if self.weights.pde > 0.0 {
            let x = self.collocation.to_dual(g);
            let out = model.forward_batch(g, params, &x);
            let ut = out.tangents[0].expect("seeded input has a tangent");
            let ux = out.tangents[1].expect("seeded input has a tangent");
            let bux = g.scale(ux, self.beta);
            let res = g.add(ut, bux);
            let sq = g.square(res);
            pde = g.mean(sq);
        }
        let mut total = zero;
        for (w, term) in [(self.weights.ic, ic), (self.weights.bc, bc), (self.weights.pde, pde)] {
            if w > 0.0 {
                let s = g.scale(term, w);
                total = g.add(total, s);
            }
        }
        PinnTerms { ic, bc, pde, total }
    }
}

impl Objective for PinnObjective {
    fn loss(&self, g: &mut Graph, model: &Model, params: &[Var]) -> Var {
        self.terms(g, model, params).total
    }
}
