//! Matrix-valued reverse-mode graph.
//!
//! Each node holds an `n x m` array whose rows are independent samples. The
//! op set mirrors the scalar [`Tape`](super::Tape) (plus matrix products, row
//! broadcasts and a fused learned-activation op), and forward-mode tangents are
//! again ordinary graph nodes: a [`Dual`] carries one optional tangent per
//! seed direction, `None` meaning structurally zero.
//!
//! Shape mismatches are programming errors and panic.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};

/// Number of scalars in one learned activation: `w1[3], b1[3], w2[3], b2`.
pub const RHO_PARAMS: usize = 10;

/// A linear operator applied column-wise by [`Graph::linear`].
pub trait LinearMap: Send + Sync + fmt::Debug {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `y = A x`; `y` has `rows()` entries and is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `x += A^T y`.
    fn apply_transpose_add(&self, y: &[f64], x: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum BOp {
    Constant,
    Param,
    MatMulT(usize, usize),
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sin(usize),
    Cos(usize),
    Exp(usize),
    Relu(usize),
    Square(usize),
    Rho(usize, usize),
    RhoSlope(usize, usize),
    Mean(usize),
    Linear(usize, Arc<dyn LinearMap>),
}

#[derive(Debug)]
struct Entry {
    op: BOp,
    value: Array2<f64>,
    needs_grad: bool,
}

/// A value together with its tangents along each seed direction.
#[derive(Debug, Clone)]
pub struct Dual {
    pub value: Var,
    pub tangents: Vec<Option<Var>>,
}

impl Dual {
    /// A value with `directions` zero tangents.
    pub fn constant(value: Var, directions: usize) -> Self {
        Self {
            value,
            tangents: vec![None; directions],
        }
    }

    pub fn directions(&self) -> usize {
        self.tangents.len()
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Entry>,
    params: Vec<usize>,
}

/// Per-parameter adjoints in registration order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub per_param: Vec<Array2<f64>>,
}

impl Gradients {
    /// Concatenates the adjoints in registration order (row-major within each).
    pub fn flatten(&self) -> Vec<f64> {
        let n = self.per_param.iter().map(|a| a.len()).sum();
        let mut out = Vec::with_capacity(n);
        for a in &self.per_param {
            out.extend(a.iter().copied());
        }
        out
    }
}

fn rho_columns(p: &Array2<f64>, cols: usize) -> Vec<[f64; RHO_PARAMS]> {
    let r = p.nrows();
    (0..cols)
        .map(|j| {
            let row = p.row(j % r);
            let mut q = [0.0; RHO_PARAMS];
            for (d, s) in q.iter_mut().zip(row.iter()) {
                *d = *s;
            }
            q
        })
        .collect()
}

#[inline]
fn rho_eval(q: &[f64; RHO_PARAMS], h: f64) -> f64 {
    let mut acc = q[9];
    for k in 0..3 {
        let pre = q[k] * h + q[3 + k];
        if pre > 0.0 {
            acc += q[6 + k] * pre;
        }
    }
    acc
}

#[inline]
fn rho_slope(q: &[f64; RHO_PARAMS], h: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..3 {
        if q[k] * h + q[3 + k] > 0.0 {
            acc += q[6 + k] * q[k];
        }
    }
    acc
}

fn accumulate(adj: &mut [Option<Array2<f64>>], i: usize, contribution: Array2<f64>) {
    match &mut adj[i] {
        Some(a) => *a += &contribution,
        slot @ None => *slot = Some(contribution),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let a = self.value(v);
        assert_eq!(a.dim(), (1, 1), "scalar() on a non-scalar node");
        a[[0, 0]]
    }

    fn push(&mut self, op: BOp, value: Array2<f64>, needs_grad: bool) -> Var {
        self.nodes.push(Entry {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(BOp::Constant, value, false)
    }

    /// Registers a trainable block.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        let v = self.push(BOp::Param, value, true);
        self.params.push(v.0);
        v
    }

    pub fn params(&self) -> Vec<Var> {
        self.params.iter().map(|&i| Var(i)).collect()
    }

    /// `x w^T` for `x: n x k`, `w: m x k`.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Var {
        let value = self.value(x).dot(&self.value(w).t());
        let g = self.grad(x.0) || self.grad(w.0);
        self.push(BOp::MatMulT(x.0, w.0), value, g)
    }

    /// Adds the `1 x m` row `b` to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let bv = self.value(b);
        assert_eq!(bv.nrows(), 1, "add_row expects a 1 x m bias");
        let value = self.value(x) + bv;
        let g = self.grad(x.0) || self.grad(b.0);
        self.push(BOp::AddRow(x.0, b.0), value, g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let g = self.grad(a.0) || self.grad(b.0);
        self.push(BOp::Add(a.0, b.0), value, g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        let g = self.grad(a.0) || self.grad(b.0);
        self.push(BOp::Sub(a.0, b.0), value, g)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul shape mismatch");
        let value = self.value(a) * self.value(b);
        let g = self.grad(a.0) || self.grad(b.0);
        self.push(BOp::Mul(a.0, b.0), value, g)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        let g = self.grad(a.0);
        self.push(BOp::Scale(a.0, c), value, g)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::sin);
        let g = self.grad(a.0);
        self.push(BOp::Sin(a.0), value, g)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::cos);
        let g = self.grad(a.0);
        self.push(BOp::Cos(a.0), value, g)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::exp);
        let g = self.grad(a.0);
        self.push(BOp::Exp(a.0), value, g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| if v > 0.0 { v } else { 0.0 });
        let g = self.grad(a.0);
        self.push(BOp::Relu(a.0), value, g)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| v * v);
        let g = self.grad(a.0);
        self.push(BOp::Square(a.0), value, g)
    }

    /// Indicator `[a > 0]` as a constant; its derivative vanishes almost everywhere.
    pub fn step(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        self.constant(value)
    }

    /// Learned activation `w2 . relu(w1 h + b1) + b2`, elementwise. `p` is
    /// `r x 10`; column `j` of `x` uses row `j % r`.
    pub fn rho(&mut self, x: Var, p: Var) -> Var {
        let xv = self.value(x);
        let q = rho_columns(self.value(p), xv.ncols());
        let mut value = xv.clone();
        for mut row in value.rows_mut() {
            for (v, qj) in row.iter_mut().zip(&q) {
                *v = rho_eval(qj, *v);
            }
        }
        let g = self.grad(x.0) || self.grad(p.0);
        self.push(BOp::Rho(x.0, p.0), value, g)
    }

    /// Derivative of [`Graph::rho`] with respect to its input.
    pub fn rho_slope(&mut self, x: Var, p: Var) -> Var {
        let xv = self.value(x);
        let q = rho_columns(self.value(p), xv.ncols());
        let mut value = xv.clone();
        for mut row in value.rows_mut() {
            for (v, qj) in row.iter_mut().zip(&q) {
                *v = rho_slope(qj, *v);
            }
        }
        let g = self.grad(p.0);
        self.push(BOp::RhoSlope(x.0, p.0), value, g)
    }

    /// Mean of all entries, as a `1 x 1` node.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let m = v.sum() / v.len() as f64;
        let g = self.grad(a.0);
        self.push(BOp::Mean(a.0), Array2::from_elem((1, 1), m), g)
    }

    /// Applies `op` to each column of `x`.
    pub fn linear(&mut self, x: Var, op: Arc<dyn LinearMap>) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.nrows(), op.cols(), "linear map input size");
        let mut value = Array2::zeros((op.rows(), xv.ncols()));
        let mut col_in = vec![0.0; op.cols()];
        let mut col_out = vec![0.0; op.rows()];
        for c in 0..xv.ncols() {
            for (d, s) in col_in.iter_mut().zip(xv.column(c)) {
                *d = *s;
            }
            op.apply(&col_in, &mut col_out);
            for (d, s) in value.column_mut(c).iter_mut().zip(&col_out) {
                *d = *s;
            }
        }
        let g = self.grad(x.0);
        self.push(BOp::Linear(x.0, op), value, g)
    }

    /// Reverse accumulation from a `1 x 1` node.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.value(out).dim(), (1, 1), "backward from a non-scalar node");
        let mut adj: Vec<Option<Array2<f64>>> = vec![None; out.0 + 1];
        adj[out.0] = Some(Array2::from_elem((1, 1), 1.0));
        for i in (0..=out.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            match &self.nodes[i].op {
                BOp::Constant => {}
                BOp::Param => adj[i] = Some(g),
                &BOp::MatMulT(x, w) => {
                    if self.grad(x) {
                        accumulate(&mut adj, x, g.dot(&self.nodes[w].value));
                    }
                    if self.grad(w) {
                        accumulate(&mut adj, w, g.t().dot(&self.nodes[x].value));
                    }
                }
                &BOp::AddRow(x, b) => {
                    if self.grad(b) {
                        accumulate(&mut adj, b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.grad(x) {
                        accumulate(&mut adj, x, g);
                    }
                }
                &BOp::Add(a, b) => {
                    if self.grad(a) && self.grad(b) {
                        accumulate(&mut adj, a, g.clone());
                        accumulate(&mut adj, b, g);
                    } else if self.grad(a) {
                        accumulate(&mut adj, a, g);
                    } else {
                        accumulate(&mut adj, b, g);
                    }
                }
                &BOp::Sub(a, b) => {
                    if self.grad(b) {
                        accumulate(&mut adj, b, -&g);
                    }
                    if self.grad(a) {
                        accumulate(&mut adj, a, g);
                    }
                }
                &BOp::Mul(a, b) => {
                    if self.grad(a) {
                        accumulate(&mut adj, a, &g * &self.nodes[b].value);
                    }
                    if self.grad(b) {
                        accumulate(&mut adj, b, &g * &self.nodes[a].value);
                    }
                }
                &BOp::Scale(a, c) => accumulate(&mut adj, a, g * c),
                &BOp::Sin(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(&self.nodes[a].value)
                        .for_each(|d, &x| *d *= x.cos());
                    accumulate(&mut adj, a, d);
                }
                &BOp::Cos(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(&self.nodes[a].value)
                        .for_each(|d, &x| *d *= -x.sin());
                    accumulate(&mut adj, a, d);
                }
                &BOp::Exp(a) => accumulate(&mut adj, a, g * &self.nodes[i].value),
                &BOp::Relu(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&self.nodes[a].value).for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                    accumulate(&mut adj, a, d);
                }
                &BOp::Square(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(&self.nodes[a].value)
                        .for_each(|d, &x| *d *= 2.0 * x);
                    accumulate(&mut adj, a, d);
                }
                &BOp::Rho(x, p) => self.rho_backward(&mut adj, &g, x, p),
                &BOp::RhoSlope(x, p) => self.rho_slope_backward(&mut adj, &g, x, p),
                &BOp::Mean(a) => {
                    let shape = self.nodes[a].value.dim();
                    let n = (shape.0 * shape.1) as f64;
                    accumulate(&mut adj, a, Array2::from_elem(shape, g[[0, 0]] / n));
                }
                BOp::Linear(x, op) => {
                    let x = *x;
                    let mut d = Array2::zeros(self.nodes[x].value.dim());
                    let mut col_in = vec![0.0; op.rows()];
                    let mut col_out = vec![0.0; op.cols()];
                    for c in 0..g.ncols() {
                        for (dst, s) in col_in.iter_mut().zip(g.column(c)) {
                            *dst = *s;
                        }
                        col_out.iter_mut().for_each(|v| *v = 0.0);
                        op.apply_transpose_add(&col_in, &mut col_out);
                        for (dst, s) in d.column_mut(c).iter_mut().zip(&col_out) {
                            *dst = *s;
                        }
                    }
                    accumulate(&mut adj, x, d);
                }
            }
        }
        let per_param = self
            .params
            .iter()
            .map(|&p| {
                adj.get_mut(p)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Array2::zeros(self.nodes[p].value.dim()))
            })
            .collect();
        Gradients { per_param }
    }

    fn rho_backward(&self, adj: &mut [Option<Array2<f64>>], g: &Array2<f64>, x: usize, p: usize) {
        let xv = &self.nodes[x].value;
        let pv = &self.nodes[p].value;
        let r = pv.nrows();
        let q = rho_columns(pv, xv.ncols());
        let mut gp = Array2::<f64>::zeros(pv.dim());
        let want_x = self.grad(x);
        let mut gx = if want_x {
            Array2::zeros(xv.dim())
        } else {
            Array2::zeros((0, 0))
        };
        for (row_i, (xrow, grow)) in xv.rows().into_iter().zip(g.rows()).enumerate() {
            for (j, (&h, &gij)) in xrow.iter().zip(grow.iter()).enumerate() {
                let qj = &q[j];
                let mut slope = 0.0;
                let mut gp_row = gp.row_mut(j % r);
                for k in 0..3 {
                    let pre = qj[k] * h + qj[3 + k];
                    if pre > 0.0 {
                        let w2 = qj[6 + k];
                        slope += w2 * qj[k];
                        gp_row[k] += gij * w2 * h;
                        gp_row[3 + k] += gij * w2;
                        gp_row[6 + k] += gij * pre;
                    }
                }
                gp_row[9] += gij;
                if want_x {
                    gx[[row_i, j]] = gij * slope;
                }
            }
        }
        if self.grad(p) {
            accumulate(adj, p, gp);
        }
        if want_x {
            accumulate(adj, x, gx);
        }
    }

    fn rho_slope_backward(
        &self,
        adj: &mut [Option<Array2<f64>>],
        g: &Array2<f64>,
        x: usize,
        p: usize,
    ) {
        let xv = &self.nodes[x].value;
        let pv = &self.nodes[p].value;
        let r = pv.nrows();
        let q = rho_columns(pv, xv.ncols());
        let mut gp = Array2::<f64>::zeros(pv.dim());
        for (xrow, grow) in xv.rows().into_iter().zip(g.rows()) {
            for (j, (&h, &gij)) in xrow.iter().zip(grow.iter()).enumerate() {
                let qj = &q[j];
                let mut gp_row = gp.row_mut(j % r);
                for k in 0..3 {
                    if qj[k] * h + qj[3 + k] > 0.0 {
                        gp_row[k] += gij * qj[6 + k];
                        gp_row[6 + k] += gij * qj[k];
                    }
                }
            }
        }
        accumulate(adj, p, gp);
    }

    // ---- forward-mode helpers -------------------------------------------------

    fn map_tangents(&mut self, x: &Dual, mut f: impl FnMut(&mut Self, Var) -> Var) -> Vec<Option<Var>> {
        x.tangents
            .iter()
            .map(|t| t.map(|t| f(self, t)))
            .collect()
    }

    pub fn d_matmul_t(&mut self, x: &Dual, w: Var) -> Dual {
        let value = self.matmul_t(x.value, w);
        let tangents = self.map_tangents(x, |g, t| g.matmul_t(t, w));
        Dual { value, tangents }
    }

    pub fn d_add_row(&mut self, x: &Dual, b: Var) -> Dual {
        Dual {
            value: self.add_row(x.value, b),
            tangents: x.tangents.clone(),
        }
    }

    pub fn d_add(&mut self, a: &Dual, b: &Dual) -> Dual {
        let value = self.add(a.value, b.value);
        let tangents = a
            .tangents
            .iter()
            .zip(&b.tangents)
            .map(|(ta, tb)| match (*ta, *tb) {
                (Some(x), Some(y)) => Some(self.add(x, y)),
                (Some(x), None) | (None, Some(x)) => Some(x),
                (None, None) => None,
            })
            .collect();
        Dual { value, tangents }
    }

    pub fn d_sub(&mut self, a: &Dual, b: &Dual) -> Dual {
        let value = self.sub(a.value, b.value);
        let tangents = a
            .tangents
            .iter()
            .zip(&b.tangents)
            .map(|(ta, tb)| match (*ta, *tb) {
                (Some(x), Some(y)) => Some(self.sub(x, y)),
                (Some(x), None) => Some(x),
                (None, Some(y)) => Some(self.scale(y, -1.0)),
                (None, None) => None,
            })
            .collect();
        Dual { value, tangents }
    }

    pub fn d_mul(&mut self, a: &Dual, b: &Dual) -> Dual {
        let value = self.mul(a.value, b.value);
        let tangents = a
            .tangents
            .iter()
            .zip(&b.tangents)
            .map(|(ta, tb)| {
                let l = ta.map(|t| self.mul(t, b.value));
                let r = tb.map(|t| self.mul(a.value, t));
                match (l, r) {
                    (Some(x), Some(y)) => Some(self.add(x, y)),
                    (x, None) => x,
                    (None, y) => y,
                }
            })
            .collect();
        Dual { value, tangents }
    }

    pub fn d_scale(&mut self, x: &Dual, c: f64) -> Dual {
        let value = self.scale(x.value, c);
        let tangents = self.map_tangents(x, |g, t| g.scale(t, c));
        Dual { value, tangents }
    }

    pub fn d_sin(&mut self, x: &Dual) -> Dual {
        let value = self.sin(x.value);
        let deriv = x.tangents.iter().any(Option::is_some).then(|| self.cos(x.value));
        let tangents = self.map_tangents(x, |g, t| g.mul(deriv.expect("present"), t));
        Dual { value, tangents }
    }

    pub fn d_cos(&mut self, x: &Dual) -> Dual {
        let value = self.cos(x.value);
        let deriv = x.tangents.iter().any(Option::is_some).then(|| {
            let s = self.sin(x.value);
            self.scale(s, -1.0)
        });
        let tangents = self.map_tangents(x, |g, t| g.mul(deriv.expect("present"), t));
        Dual { value, tangents }
    }

    pub fn d_exp(&mut self, x: &Dual) -> Dual {
        let value = self.exp(x.value);
        let tangents = self.map_tangents(x, |g, t| g.mul(value, t));
        Dual { value, tangents }
    }

    pub fn d_relu(&mut self, x: &Dual) -> Dual {
        let value = self.relu(x.value);
        let mask = x.tangents.iter().any(Option::is_some).then(|| self.step(x.value));
        let tangents = self.map_tangents(x, |g, t| g.mul(mask.expect("present"), t));
        Dual { value, tangents }
    }

    pub fn d_square(&mut self, x: &Dual) -> Dual {
        let value = self.square(x.value);
        let deriv = x
            .tangents
            .iter()
            .any(Option::is_some)
            .then(|| self.scale(x.value, 2.0));
        let tangents = self.map_tangents(x, |g, t| g.mul(deriv.expect("present"), t));
        Dual { value, tangents }
    }

    pub fn d_rho(&mut self, x: &Dual, p: Var) -> Dual {
        let value = self.rho(x.value, p);
        let slope = x
            .tangents
            .iter()
            .any(Option::is_some)
            .then(|| self.rho_slope(x.value, p));
        let tangents = self.map_tangents(x, |g, t| g.mul(slope.expect("present"), t));
        Dual { value, tangents }
    }
}

/// Copies a row-major slice into an `rows x cols` array.
pub fn array_from(rows: usize, cols: usize, data: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), data.to_vec()).expect("shape matches data length")
}
