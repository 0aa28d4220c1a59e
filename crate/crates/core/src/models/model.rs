//! Network architectures and their flat parameter layout.
//!
//! Parameters are flattened block by block. For an MLP stack each hidden
//! layer contributes `W` (row-major, `out x in`), then `b`, then its learned
//! activation block (`r x 10`, only for NestNet); the output layer follows
//! with `W`, `b`. An MFN contributes filter 1 (`Omega`, `phi`), then for each
//! further layer `W`, `b`, `Omega`, `phi`, and finally the output `W`, `b`.

use std::f64::consts::PI;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::{ActivationSpec, LearnedActivation};
use super::encoding::{EncodingKind, EncodingSpec};
use super::ModelError;
use crate::autodiff::batch::{Dual, Graph, Var, RHO_PARAMS};
use crate::autodiff::{Node, Op, Tape, TapeValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Nestnet,
    MlpRelu,
    Ffn,
    Siren,
    Gaussian,
    WireReal,
    Mfn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Nestnet,
        ModelKind::MlpRelu,
        ModelKind::Ffn,
        ModelKind::Siren,
        ModelKind::Gaussian,
        ModelKind::WireReal,
        ModelKind::Mfn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Nestnet => "nestnet",
            ModelKind::MlpRelu => "mlp_relu",
            ModelKind::Ffn => "ffn",
            ModelKind::Siren => "siren",
            ModelKind::Gaussian => "gaussian",
            ModelKind::WireReal => "wire_real",
            ModelKind::Mfn => "mfn",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ModelError::InvalidSpec(format!("unknown model kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchKind {
    MlpStack,
    Mfn,
}

/// Architecture descriptor. Everything needed to rebuild a model's shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Nominal hidden width; `wire_real` divides it by sqrt(2).
    pub width: usize,
    /// Number of hidden layers.
    pub depth: usize,
    pub encoding: EncodingSpec,
    /// Frequency of `siren` and `wire_real`.
    pub omega0: f64,
    /// Width parameter of `gaussian` and `wire_real`.
    pub s0: f64,
    /// Bound of the MFN filter frequencies.
    pub frequency_scale: f64,
    /// Learned activations per hidden layer, assigned round-robin over neurons.
    pub subnets_per_layer: usize,
}

impl ModelSpec {
    /// Defaults for `kind`: NestNet and FFN get an 8-frequency Fourier
    /// encoding at scale 0.5 (lowest period spans `[-1, 1]`), the rest take
    /// raw coordinates.
    pub fn new(kind: ModelKind, input_dim: usize, output_dim: usize, width: usize, depth: usize) -> Self {
        let encoding = match kind {
            ModelKind::Nestnet | ModelKind::Ffn => EncodingSpec::fourier(8).with_scale(0.5),
            _ => EncodingSpec::identity(),
        };
        Self {
            kind,
            input_dim,
            output_dim,
            width,
            depth,
            encoding,
            omega0: 30.0,
            s0: 30.0,
            frequency_scale: 20.0,
            subnets_per_layer: 1,
        }
    }

    pub fn arch(&self) -> ArchKind {
        if self.kind == ModelKind::Mfn {
            ArchKind::Mfn
        } else {
            ArchKind::MlpStack
        }
    }

    pub fn hidden_width(&self) -> usize {
        match self.kind {
            ModelKind::WireReal => ((self.width as f64 / 2f64.sqrt()).round() as usize).max(1),
            _ => self.width,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidSpec(m));
        if self.input_dim == 0 || self.output_dim == 0 {
            return bad("input and output dimensions must be positive".into());
        }
        if self.width == 0 || self.depth == 0 {
            return bad(format!("width and depth must be >= 1 (got {} / {})", self.width, self.depth));
        }
        if self.kind == ModelKind::Nestnet && self.subnets_per_layer == 0 {
            return bad("subnets_per_layer must be >= 1".into());
        }
        if self.kind == ModelKind::Mfn && !(self.frequency_scale.is_finite() && self.frequency_scale > 0.0) {
            return bad(format!("frequency_scale must be positive, got {}", self.frequency_scale));
        }
        self.encoding.validate()?;
        self.encoding.check_input_dim(self.input_dim)?;
        self.hidden_activation().validate()
    }

    /// Hidden activation at initialization.
    pub fn hidden_activation(&self) -> ActivationSpec {
        match self.kind {
            ModelKind::Nestnet => ActivationSpec::Learned {
                subnets: vec![LearnedActivation::initial(); self.subnets_per_layer],
            },
            ModelKind::MlpRelu | ModelKind::Ffn => ActivationSpec::Relu,
            ModelKind::Siren => ActivationSpec::Sine { omega0: self.omega0 },
            ModelKind::Gaussian => ActivationSpec::Gaussian { s0: self.s0 },
            ModelKind::WireReal => ActivationSpec::GaborReal {
                omega0: self.omega0,
                s0: self.s0,
            },
            ModelKind::Mfn => ActivationSpec::Identity,
        }
    }
}

/// `L(h) = W h + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    /// `out x in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl AffineLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// MFN filter `g(x) = sin(Omega x + phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterLayer {
    /// `width x input`.
    pub omega: Array2<f64>,
    pub phase: Array1<f64>,
}

/// Encoded coordinates and their constant tangents, reusable across steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInput {
    pub value: Array2<f64>,
    pub tangents: Vec<Array2<f64>>,
}

impl EncodedInput {
    pub fn rows(&self) -> usize {
        self.value.nrows()
    }

    pub fn to_dual(&self, g: &mut Graph) -> Dual {
        let value = g.constant(self.value.clone());
        let tangents = self.tangents.iter().map(|t| Some(g.constant(t.clone()))).collect();
        Dual { value, tangents }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Weight(usize),
    Bias(usize),
    Rho(usize),
    Omega(usize),
    Phase(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    /// Hidden layers followed by the output layer.
    pub layers: Vec<AffineLayer>,
    /// One per hidden layer (MLP stacks only).
    pub activations: Vec<ActivationSpec>,
    /// MFN filters, one per hidden layer.
    pub filters: Vec<FilterLayer>,
}

fn uniform(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    if bound == 0.0 {
        0.0
    } else {
        rng.random_range(-bound..bound)
    }
}

fn fill(rng: &mut ChaCha8Rng, layer: &mut AffineLayer, weight_bound: f64, bias_bound: f64) {
    layer.weight.mapv_inplace(|_| uniform(rng, weight_bound));
    layer.bias.mapv_inplace(|_| uniform(rng, bias_bound));
}

impl Model {
    /// Builds and initializes a model. Same `(spec, seed)` gives bitwise
    /// identical parameters.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = spec.hidden_width();
        let in_dim = spec.encoding.output_dim(spec.input_dim);
        let mut model = Model {
            spec: spec.clone(),
            layers: Vec::new(),
            activations: Vec::new(),
            filters: Vec::new(),
        };
        match spec.arch() {
            ArchKind::MlpStack => {
                let mut fan_in = in_dim;
                for i in 0..=spec.depth {
                    let out = if i == spec.depth { spec.output_dim } else { w };
                    let mut layer = AffineLayer::zeros(fan_in, out);
                    let f = fan_in as f64;
                    let (wb, bb) = match spec.kind {
                        ModelKind::Siren if i == 0 => (1.0 / f, 1.0 / f.sqrt()),
                        ModelKind::Siren => ((6.0 / f).sqrt() / spec.omega0, 1.0 / f.sqrt()),
                        ModelKind::Gaussian | ModelKind::WireReal => (1.0 / f.sqrt(), 1.0 / f.sqrt()),
                        _ => ((6.0 / f).sqrt(), 1.0 / f.sqrt()),
                    };
                    fill(&mut rng, &mut layer, wb, bb);
                    model.layers.push(layer);
                    if i < spec.depth {
                        model.activations.push(spec.hidden_activation());
                    }
                    fan_in = out;
                }
            }
            ArchKind::Mfn => {
                for i in 0..spec.depth {
                    if i > 0 {
                        let mut layer = AffineLayer::zeros(w, w);
                        fill(&mut rng, &mut layer, (1.0 / w as f64).sqrt(), 1.0 / (w as f64).sqrt());
                        model.layers.push(layer);
                    }
                    let omega = Array2::from_shape_fn((w, in_dim), |_| uniform(&mut rng, spec.frequency_scale));
                    let phase = Array1::from_shape_fn(w, |_| rng.random_range(-PI..PI));
                    model.filters.push(FilterLayer { omega, phase });
                }
                let mut out = AffineLayer::zeros(w, spec.output_dim);
                fill(&mut rng, &mut out, (1.0 / w as f64).sqrt(), 1.0 / (w as f64).sqrt());
                model.layers.push(out);
            }
        }
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn encoding(&self) -> &EncodingSpec {
        &self.spec.encoding
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    /// Learned activations of each hidden layer (empty for other kinds).
    pub fn learned_activations(&self) -> Vec<&[LearnedActivation]> {
        self.activations
            .iter()
            .filter_map(|a| match a {
                ActivationSpec::Learned { subnets } => Some(subnets.as_slice()),
                _ => None,
            })
            .collect()
    }

    fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::new();
        match self.spec.arch() {
            ArchKind::MlpStack => {
                for i in 0..self.layers.len() {
                    out.push(Block::Weight(i));
                    out.push(Block::Bias(i));
                    if self.activations.get(i).is_some_and(ActivationSpec::is_learned) {
                        out.push(Block::Rho(i));
                    }
                }
            }
            ArchKind::Mfn => {
                for i in 0..self.filters.len() {
                    if i > 0 {
                        out.push(Block::Weight(i - 1));
                        out.push(Block::Bias(i - 1));
                    }
                    out.push(Block::Omega(i));
                    out.push(Block::Phase(i));
                }
                let last = self.layers.len() - 1;
                out.push(Block::Weight(last));
                out.push(Block::Bias(last));
            }
        }
        out
    }

    fn block_array(&self, b: Block) -> Array2<f64> {
        match b {
            Block::Weight(i) => self.layers[i].weight.clone(),
            Block::Bias(i) => self.layers[i].bias.clone().insert_axis(ndarray::Axis(0)),
            Block::Rho(i) => {
                let subnets = match &self.activations[i] {
                    ActivationSpec::Learned { subnets } => subnets,
                    _ => unreachable!("rho block on a fixed activation"),
                };
                let flat: Vec<f64> = subnets.iter().flat_map(|s| s.to_array()).collect();
                Array2::from_shape_vec((subnets.len(), RHO_PARAMS), flat).expect("rho block shape")
            }
            Block::Omega(i) => self.filters[i].omega.clone(),
            Block::Phase(i) => self.filters[i].phase.clone().insert_axis(ndarray::Axis(0)),
        }
    }

    fn block_len(&self, b: Block) -> usize {
        match b {
            Block::Weight(i) => self.layers[i].weight.len(),
            Block::Bias(i) => self.layers[i].bias.len(),
            Block::Rho(i) => match &self.activations[i] {
                ActivationSpec::Learned { subnets } => subnets.len() * RHO_PARAMS,
                _ => 0,
            },
            Block::Omega(i) => self.filters[i].omega.len(),
            Block::Phase(i) => self.filters[i].phase.len(),
        }
    }

    fn set_block(&mut self, b: Block, data: &[f64]) {
        let copy = |dst: &mut dyn Iterator<Item = &mut f64>| {
            for (d, s) in dst.zip(data) {
                *d = *s;
            }
        };
        match b {
            Block::Weight(i) => copy(&mut self.layers[i].weight.iter_mut()),
            Block::Bias(i) => copy(&mut self.layers[i].bias.iter_mut()),
            Block::Rho(i) => {
                if let ActivationSpec::Learned { subnets } = &mut self.activations[i] {
                    for (s, chunk) in subnets.iter_mut().zip(data.chunks(RHO_PARAMS)) {
                        *s = LearnedActivation::from_slice(chunk);
                    }
                }
            }
            Block::Omega(i) => copy(&mut self.filters[i].omega.iter_mut()),
            Block::Phase(i) => copy(&mut self.filters[i].phase.iter_mut()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.blocks().into_iter().map(|b| self.block_len(b)).sum()
    }

    /// All trainable parameters in the documented flat order.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for b in self.blocks() {
            out.extend(self.block_array(b).iter().copied());
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<(), ModelError> {
        let expected = self.param_count();
        if params.len() != expected {
            return Err(ModelError::ParamCount {
                expected,
                got: params.len(),
            });
        }
        let mut offset = 0;
        for b in self.blocks() {
            let n = self.block_len(b);
            self.set_block(b, &params[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    // ---- batched graph ---------------------------------------------------------

    /// Registers every parameter block as a graph parameter, in flat order.
    pub fn register_params(&self, g: &mut Graph) -> Vec<Var> {
        self.blocks().into_iter().map(|b| g.param(self.block_array(b))).collect()
    }

    /// Parameter blocks as graph constants (no gradients).
    pub fn constant_params(&self, g: &mut Graph) -> Vec<Var> {
        self.blocks().into_iter().map(|b| g.constant(self.block_array(b))).collect()
    }

    /// Encodes `coords` (`n x input_dim`). Each seed `(axis, direction)` adds
    /// a tangent: the derivative of the features along `axis`, scaled by
    /// `direction`.
    pub fn encode_inputs(&self, coords: &Array2<f64>, seeds: &[(usize, f64)]) -> Result<EncodedInput, ModelError> {
        self.check_dim(coords.ncols())?;
        if let Some(&(axis, _)) = seeds.iter().find(|(a, _)| *a >= coords.ncols()) {
            return Err(ModelError::DimensionMismatch {
                expected: coords.ncols(),
                got: axis + 1,
            });
        }
        let enc = self.encoding();
        Ok(EncodedInput {
            value: enc.encode_batch(coords),
            tangents: seeds
                .iter()
                .map(|&(axis, dir)| enc.tangent_batch(coords, axis, dir))
                .collect(),
        })
    }

    /// [`Model::encode_inputs`] placed on a graph.
    pub fn input_dual(&self, g: &mut Graph, coords: &Array2<f64>, seeds: &[(usize, f64)]) -> Result<Dual, ModelError> {
        Ok(self.encode_inputs(coords, seeds)?.to_dual(g))
    }

    /// Batched forward pass on encoded inputs. `params` come from
    /// [`Model::register_params`] or [`Model::constant_params`].
    pub fn forward_batch(&self, g: &mut Graph, params: &[Var], input: &Dual) -> Dual {
        let mut p = params.iter().copied();
        let mut next = || p.next().expect("parameter list matches the model");
        match self.spec.arch() {
            ArchKind::MlpStack => {
                let mut h = input.clone();
                for (i, _) in self.layers.iter().enumerate() {
                    let w = next();
                    let b = next();
                    h = g.d_matmul_t(&h, w);
                    h = g.d_add_row(&h, b);
                    if let Some(act) = self.activations.get(i) {
                        let rho = act.is_learned().then(&mut next);
                        h = act.apply_batch(g, &h, rho);
                    }
                }
                h
            }
            ArchKind::Mfn => {
                let filter = |g: &mut Graph, omega: Var, phase: Var| {
                    let a = g.d_matmul_t(input, omega);
                    let a = g.d_add_row(&a, phase);
                    g.d_sin(&a)
                };
                let (o, ph) = (next(), next());
                let mut z = filter(g, o, ph);
                for _ in 1..self.filters.len() {
                    let (w, b) = (next(), next());
                    let a = g.d_matmul_t(&z, w);
                    let a = g.d_add_row(&a, b);
                    let (o, ph) = (next(), next());
                    let f = filter(g, o, ph);
                    z = g.d_mul(&a, &f);
                }
                let (w, b) = (next(), next());
                let out = g.d_matmul_t(&z, w);
                g.d_add_row(&out, b)
            }
        }
    }

    /// Evaluates the model on `n x input_dim` coordinates.
    pub fn predict(&self, coords: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        let mut g = Graph::new();
        let params = self.constant_params(&mut g);
        let input = self.input_dual(&mut g, coords, &[])?;
        let out = self.forward_batch(&mut g, &params, &input);
        Ok(g.value(out.value).clone())
    }

    fn check_dim(&self, got: usize) -> Result<(), ModelError> {
        if got != self.spec.input_dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.spec.input_dim,
                got,
            });
        }
        Ok(())
    }

    // ---- scalar tape -------------------------------------------------------------

    /// Records every parameter as a trainable leaf, in flat order.
    pub fn register_on_tape(&self, tape: &mut Tape) -> Result<Vec<Node>, ModelError> {
        self.parameters()
            .into_iter()
            .map(|v| tape.leaf(v, true).map_err(ModelError::from))
            .collect()
    }

    /// Single-point forward pass on a scalar tape. `params` are the flat
    /// parameter nodes; `x` the raw coordinates (plain or dual).
    pub fn forward<S: TapeValue>(&self, tape: &mut Tape, params: &[Node], x: &[S]) -> Result<Vec<S>, ModelError> {
        self.check_dim(x.len())?;
        let expected = self.param_count();
        if params.len() != expected {
            return Err(ModelError::ParamCount {
                expected,
                got: params.len(),
            });
        }
        let input = self.encoding().encode_on_tape(tape, x)?;
        let mut offsets = Vec::new();
        let mut off = 0;
        for b in self.blocks() {
            offsets.push((b, off));
            off += self.block_len(b);
        }
        let slice = |b: Block| {
            let (_, o) = offsets.iter().find(|(k, _)| *k == b).expect("block exists");
            &params[*o..*o + self.block_len(b)]
        };
        let affine = |tape: &mut Tape, i: usize, h: &[S]| -> Result<Vec<S>, ModelError> {
            let layer = &self.layers[i];
            let w = slice(Block::Weight(i));
            let b = slice(Block::Bias(i));
            let (rows, cols) = layer.weight.dim();
            let mut out = Vec::with_capacity(rows);
            for r in 0..rows {
                let mut acc = S::lift(tape, b[r])?;
                for c in 0..cols {
                    let wn = S::lift(tape, w[r * cols + c])?;
                    let term = S::apply(tape, Op::Mul, &[wn, h[c]])?;
                    acc = S::apply(tape, Op::Add, &[acc, term])?;
                }
                out.push(acc);
            }
            Ok(out)
        };
        match self.spec.arch() {
            ArchKind::MlpStack => {
                let mut h = input;
                for i in 0..self.layers.len() {
                    h = affine(tape, i, &h)?;
                    if let Some(act) = self.activations.get(i) {
                        let rho: &[Node] = if act.is_learned() { slice(Block::Rho(i)) } else { &[] };
                        h = h
                            .into_iter()
                            .enumerate()
                            .map(|(j, z)| act.apply_on_tape(tape, z, j, rho))
                            .collect::<Result<_, _>>()?;
                    }
                }
                Ok(h)
            }
            ArchKind::Mfn => {
                let filter = |tape: &mut Tape, i: usize| -> Result<Vec<S>, ModelError> {
                    let om = slice(Block::Omega(i));
                    let ph = slice(Block::Phase(i));
                    let (rows, cols) = self.filters[i].omega.dim();
                    let mut out = Vec::with_capacity(rows);
                    for r in 0..rows {
                        let mut acc = S::lift(tape, ph[r])?;
                        for c in 0..cols {
                            let o = S::lift(tape, om[r * cols + c])?;
                            let term = S::apply(tape, Op::Mul, &[o, input[c]])?;
                            acc = S::apply(tape, Op::Add, &[acc, term])?;
                        }
                        out.push(S::apply(tape, Op::Sin, &[acc])?);
                    }
                    Ok(out)
                };
                let mut z = filter(tape, 0)?;
                for i in 1..self.filters.len() {
                    let a = affine(tape, i - 1, &z)?;
                    let f = filter(tape, i)?;
                    z = a
                        .into_iter()
                        .zip(f)
                        .map(|(a, f)| S::apply(tape, Op::Mul, &[a, f]))
                        .collect::<Result<_, _>>()?;
                }
                affine(tape, self.layers.len() - 1, &z)
            }
        }
    }
}

/// NestNet of height 2: learned subnetwork activations in every hidden layer.
pub fn build_nestnet(
    input_dim: usize,
    output_dim: usize,
    width: usize,
    depth: usize,
    encoding: EncodingSpec,
    seed: u64,
) -> Result<Model, ModelError> {
    let mut spec = ModelSpec::new(ModelKind::Nestnet, input_dim, output_dim, width, depth);
    spec.encoding = encoding;
    Model::build(&spec, seed)
}

/// Baseline of the given kind with hyperparameters taken from `hyper`
/// (`omega0` / `s0` as the kind requires).
pub fn build_baseline(
    kind: ModelKind,
    input_dim: usize,
    output_dim: usize,
    width: usize,
    depth: usize,
    hyper: &ActivationSpec,
    seed: u64,
) -> Result<Model, ModelError> {
    if kind == ModelKind::Nestnet {
        return Err(ModelError::InvalidSpec("nestnet is not a baseline".into()));
    }
    let mut spec = ModelSpec::new(kind, input_dim, output_dim, width, depth);
    match (kind, hyper) {
        (ModelKind::Siren, ActivationSpec::Sine { omega0 }) => spec.omega0 = *omega0,
        (ModelKind::Gaussian, ActivationSpec::Gaussian { s0 }) => spec.s0 = *s0,
        (ModelKind::WireReal, ActivationSpec::GaborReal { omega0, s0 }) => {
            spec.omega0 = *omega0;
            spec.s0 = *s0;
        }
        (ModelKind::MlpRelu | ModelKind::Ffn, ActivationSpec::Relu) | (ModelKind::Mfn, ActivationSpec::Identity) => {}
        _ => {
            return Err(ModelError::InvalidSpec(format!(
                "hyperparameters {hyper:?} do not match model kind {kind}"
            )))
        }
    }
    if kind == ModelKind::Ffn && spec.encoding.kind != EncodingKind::Fourier {
        spec.encoding = EncodingSpec::fourier(8).with_scale(0.5);
    }
    Model::build(&spec, seed)
}
