use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{AutodiffError, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(0);

/// Primitive operations recordable on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Sin,
    Cos,
    Exp,
    Relu,
    Square,
    Sqrt,
    Max,
}

impl Op {
    pub fn arity(self) -> usize {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Max => 2,
            _ => 1,
        }
    }

    fn eval(self, a: f64, b: f64) -> Result<f64> {
        let v = match self {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => {
                if b == 0.0 {
                    return Err(AutodiffError::DivisionByZero);
                }
                a / b
            }
            Op::Neg => -a,
            Op::Sin => a.sin(),
            Op::Cos => a.cos(),
            Op::Exp => a.exp(),
            Op::Relu => {
                if a > 0.0 {
                    a
                } else {
                    0.0
                }
            }
            Op::Square => a * a,
            Op::Sqrt => {
                if a < 0.0 {
                    return Err(AutodiffError::NegativeSqrt(a));
                }
                a.sqrt()
            }
            Op::Max => {
                if a >= b {
                    a
                } else {
                    b
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            let inputs = if self.arity() == 2 { vec![a, b] } else { vec![a] };
            Err(AutodiffError::NonFiniteResult { op: self, inputs })
        }
    }
}

/// Handle to a recorded scalar. Cheap to copy; only valid on the tape that
/// created it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    tape: u64,
    id: usize,
    value: f64,
}

impl Node {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

/// A primal node paired with its directional derivative along one seed
/// direction. Both live on the same tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualNode {
    pub primal: Node,
    pub tangent: Node,
}

#[derive(Debug, Clone)]
enum Record {
    Leaf,
    Unary { op: Op, input: usize },
    Binary { op: Op, lhs: usize, rhs: usize },
}

/// Append-only Wengert list of scalar operations.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    records: Vec<Record>,
    values: Vec<f64>,
    trainable: Vec<usize>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            records: Vec::new(),
            values: Vec::new(),
            trainable: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Nodes registered as trainable, in registration order.
    pub fn trainable(&self) -> &[usize] {
        &self.trainable
    }

    fn push(&mut self, record: Record, value: f64) -> Node {
        let id = self.records.len();
        self.records.push(record);
        self.values.push(value);
        Node {
            tape: self.id,
            id,
            value,
        }
    }

    fn check(&self, node: Node) -> Result<()> {
        if node.tape != self.id || node.id >= self.records.len() {
            return Err(AutodiffError::ForeignNode(node.id));
        }
        Ok(())
    }

    pub fn leaf(&mut self, value: f64, trainable: bool) -> Result<Node> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFiniteInput(value));
        }
        let node = self.push(Record::Leaf, value);
        if trainable {
            self.trainable.push(node.id);
        }
        Ok(node)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: f64) -> Result<Node> {
        self.leaf(value, false)
    }

    pub fn apply(&mut self, op: Op, inputs: &[Node]) -> Result<Node> {
        if inputs.len() != op.arity() {
            return Err(AutodiffError::Arity {
                op,
                expected: op.arity(),
                got: inputs.len(),
            });
        }
        for &n in inputs {
            self.check(n)?;
        }
        match *inputs {
            [a] => {
                let v = op.eval(a.value, 0.0)?;
                Ok(self.push(Record::Unary { op, input: a.id }, v))
            }
            [a, b] => {
                let v = op.eval(a.value, b.value)?;
                Ok(self.push(
                    Record::Binary {
                        op,
                        lhs: a.id,
                        rhs: b.id,
                    },
                    v,
                ))
            }
            _ => unreachable!("arity checked above"),
        }
    }

    pub fn add(&mut self, a: Node, b: Node) -> Result<Node> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Node, b: Node) -> Result<Node> {
        self.apply(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Node, b: Node) -> Result<Node> {
        self.apply(Op::Mul, &[a, b])
    }

    pub fn unary(&mut self, op: Op, a: Node) -> Result<Node> {
        self.apply(op, &[a])
    }

    /// Left-to-right sum. An empty slice yields a zero constant.
    pub fn sum(&mut self, xs: &[Node]) -> Result<Node> {
        let Some((&first, rest)) = xs.split_first() else {
            return self.constant(0.0);
        };
        rest.iter().try_fold(first, |acc, &x| self.add(acc, x))
    }

    pub fn dot(&mut self, a: &[Node], b: &[Node]) -> Result<Node> {
        debug_assert_eq!(a.len(), b.len());
        let products = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| self.mul(x, y))
            .collect::<Result<Vec<_>>>()?;
        self.sum(&products)
    }

    /// Recomputes every node from the leaves.
    pub fn replay(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        for (i, rec) in self.records.iter().enumerate() {
            let v = match *rec {
                Record::Leaf => self.values[i],
                Record::Unary { op, input } => op.eval(out[input], 0.0).unwrap_or(f64::NAN),
                Record::Binary { op, lhs, rhs } => {
                    op.eval(out[lhs], out[rhs]).unwrap_or(f64::NAN)
                }
            };
            out.push(v);
        }
        out
    }

    /// Reverse accumulation from `output`. Every node at or below `output`
    /// is visited once, in reverse recording order.
    pub fn backward(&self, output: Node) -> Result<GradientMap> {
        self.check(output)?;
        let mut adj = vec![0.0; output.id + 1];
        adj[output.id] = 1.0;
        for i in (0..=output.id).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            match self.records[i] {
                Record::Leaf => {}
                Record::Unary { op, input } => {
                    let a = self.values[input];
                    let out = self.values[i];
                    let d = match op {
                        Op::Neg => -1.0,
                        Op::Sin => a.cos(),
                        Op::Cos => -a.sin(),
                        Op::Exp => out,
                        Op::Relu => {
                            if a > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Op::Square => 2.0 * a,
                        // derivative at 0 taken as 0, same convention as relu
                        Op::Sqrt => {
                            if out > 0.0 {
                                0.5 / out
                            } else {
                                0.0
                            }
                        }
                        _ => unreachable!("binary op recorded as unary"),
                    };
                    adj[input] += g * d;
                }
                Record::Binary { op, lhs, rhs } => {
                    let a = self.values[lhs];
                    let b = self.values[rhs];
                    let (da, db) = match op {
                        Op::Add => (1.0, 1.0),
                        Op::Sub => (1.0, -1.0),
                        Op::Mul => (b, a),
                        Op::Div => (1.0 / b, -a / (b * b)),
                        Op::Max => {
                            if a >= b {
                                (1.0, 0.0)
                            } else {
                                (0.0, 1.0)
                            }
                        }
                        _ => unreachable!("unary op recorded as binary"),
                    };
                    adj[lhs] += g * da;
                    adj[rhs] += g * db;
                }
            }
        }
        let mut grads = GradientMap::default();
        for &p in &self.trainable {
            grads.insert(p, adj.get(p).copied().unwrap_or(0.0));
        }
        Ok(grads)
    }

    /// Seeds a leaf for forward-mode propagation with tangent `direction`.
    pub fn dual_seed(&mut self, input: Node, direction: f64) -> Result<DualNode> {
        self.check(input)?;
        if !matches!(self.records[input.id], Record::Leaf) {
            return Err(AutodiffError::NotALeaf(input.id));
        }
        let tangent = self.constant(direction)?;
        Ok(DualNode {
            primal: input,
            tangent,
        })
    }

    /// A constant with zero tangent.
    pub fn dual_constant(&mut self, value: f64) -> Result<DualNode> {
        let primal = self.constant(value)?;
        let tangent = self.constant(0.0)?;
        Ok(DualNode { primal, tangent })
    }

    /// Applies `op` to the primals and records the tangent via the chain
    /// rule using ordinary tape operations.
    pub fn dual_apply(&mut self, op: Op, inputs: &[DualNode]) -> Result<DualNode> {
        let primals: Vec<Node> = inputs.iter().map(|d| d.primal).collect();
        let out = self.apply(op, &primals)?;
        let a = inputs[0];
        let tangent = match op {
            Op::Add => self.add(a.tangent, inputs[1].tangent)?,
            Op::Sub => self.sub(a.tangent, inputs[1].tangent)?,
            Op::Mul => {
                let b = inputs[1];
                let l = self.mul(a.tangent, b.primal)?;
                let r = self.mul(a.primal, b.tangent)?;
                self.add(l, r)?
            }
            Op::Div => {
                let b = inputs[1];
                let q = self.mul(out, b.tangent)?;
                let num = self.sub(a.tangent, q)?;
                self.apply(Op::Div, &[num, b.primal])?
            }
            Op::Neg => self.unary(Op::Neg, a.tangent)?,
            Op::Sin => {
                let c = self.unary(Op::Cos, a.primal)?;
                self.mul(c, a.tangent)?
            }
            Op::Cos => {
                let s = self.unary(Op::Sin, a.primal)?;
                let ns = self.unary(Op::Neg, s)?;
                self.mul(ns, a.tangent)?
            }
            Op::Exp => self.mul(out, a.tangent)?,
            Op::Relu => {
                // the step function is piecewise constant, so it enters as a constant
                let step = self.constant(if a.primal.value > 0.0 { 1.0 } else { 0.0 })?;
                self.mul(step, a.tangent)?
            }
            Op::Square => {
                let two = self.constant(2.0)?;
                let at = self.mul(a.primal, a.tangent)?;
                self.mul(two, at)?
            }
            Op::Sqrt => {
                let two = self.constant(2.0)?;
                let den = self.mul(two, out)?;
                self.apply(Op::Div, &[a.tangent, den])?
            }
            Op::Max => {
                if a.primal.value >= inputs[1].primal.value {
                    a.tangent
                } else {
                    inputs[1].tangent
                }
            }
        };
        Ok(DualNode {
            primal: out,
            tangent,
        })
    }
}

/// Values that can flow through a tape: plain nodes, or nodes with a tangent.
/// Lets model code be written once for both forward and forward-mode passes.
pub trait TapeValue: Copy {
    fn constant(tape: &mut Tape, value: f64) -> Result<Self>;
    /// Lifts a parameter node (zero tangent).
    fn lift(tape: &mut Tape, node: Node) -> Result<Self>;
    fn apply(tape: &mut Tape, op: Op, inputs: &[Self]) -> Result<Self>;
    fn primal(&self) -> Node;
}

impl TapeValue for Node {
    fn constant(tape: &mut Tape, value: f64) -> Result<Self> {
        tape.constant(value)
    }

    fn lift(_: &mut Tape, node: Node) -> Result<Self> {
        Ok(node)
    }

    fn apply(tape: &mut Tape, op: Op, inputs: &[Self]) -> Result<Self> {
        tape.apply(op, inputs)
    }

    fn primal(&self) -> Node {
        *self
    }
}

impl TapeValue for DualNode {
    fn constant(tape: &mut Tape, value: f64) -> Result<Self> {
        tape.dual_constant(value)
    }

    fn lift(tape: &mut Tape, node: Node) -> Result<Self> {
        let tangent = tape.constant(0.0)?;
        Ok(DualNode {
            primal: node,
            tangent,
        })
    }

    fn apply(tape: &mut Tape, op: Op, inputs: &[Self]) -> Result<Self> {
        tape.dual_apply(op, inputs)
    }

    fn primal(&self) -> Node {
        self.primal
    }
}

/// Adjoints of the trainable leaves of a tape.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientMap {
    order: Vec<usize>,
    adjoints: HashMap<usize, f64>,
}

impl GradientMap {
    fn insert(&mut self, id: usize, adjoint: f64) {
        if self.adjoints.insert(id, adjoint).is_none() {
            self.order.push(id);
        }
    }

    /// Adjoint of `node`; zero for nodes the output does not depend on.
    pub fn wrt(&self, node: Node) -> f64 {
        self.adjoints.get(&node.id).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, node: Node) -> bool {
        self.adjoints.contains_key(&node.id)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Adjoints in trainable-registration order.
    pub fn to_vec(&self) -> Vec<f64> {
        self.order.iter().map(|id| self.adjoints[id]).collect()
    }
}
