//! Coordinate encodings.
//!
//! The Fourier encoding maps each coordinate axis `x_j` independently to
//! `[a_i cos(2 pi b_i s x_j), a_i sin(2 pi b_i s x_j)]` for `i = 1..K`, where
//! `s` is the encoding's input scale. Features are laid out axis-major, then by
//! frequency, cosine before sine:
//!
//! ```text
//! [cos(f_1 x_0), sin(f_1 x_0), ..., cos(f_K x_0), sin(f_K x_0), cos(f_1 x_1), ...]
//! ```

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::autodiff::{Op, Result as AdResult, Tape, TapeValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingKind {
    Identity,
    Fourier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub kind: EncodingKind,
    /// Amplitudes `a_i`, one per frequency.
    pub alphas: Vec<f64>,
    /// Frequencies `b_i`, one per frequency.
    pub betas: Vec<f64>,
    /// Multiplies the coordinate before the sinusoids. With `s = 1` the
    /// lowest frequency has period 1, i.e. half of `[-1, 1]`.
    pub scale: f64,
    /// Optional extra factor per input axis; empty means 1 for every axis.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub axis_scales: Vec<f64>,
}

impl EncodingSpec {
    pub fn identity() -> Self {
        Self {
            kind: EncodingKind::Identity,
            alphas: Vec::new(),
            betas: Vec::new(),
            scale: 1.0,
            axis_scales: Vec::new(),
        }
    }

    /// Positional encoding with `a_i = 1`, `b_i = i`.
    pub fn fourier(num_frequencies: usize) -> Self {
        Self {
            kind: EncodingKind::Fourier,
            alphas: vec![1.0; num_frequencies],
            betas: (1..=num_frequencies).map(|i| i as f64).collect(),
            scale: 1.0,
            axis_scales: Vec::new(),
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_axis_scales(mut self, axis_scales: Vec<f64>) -> Self {
        self.axis_scales = axis_scales;
        self
    }

    pub fn num_frequencies(&self) -> usize {
        self.alphas.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.kind == EncodingKind::Identity {
            return Ok(());
        }
        if self.alphas.is_empty() || self.alphas.len() != self.betas.len() {
            return Err(ModelError::InvalidSpec(format!(
                "fourier encoding needs K >= 1 matching alphas/betas (got {} / {})",
                self.alphas.len(),
                self.betas.len()
            )));
        }
        if let Some(a) = self.alphas.iter().find(|a| a.is_nan() || **a <= 0.0) {
            return Err(ModelError::InvalidSpec(format!("alpha must be positive, got {a}")));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(ModelError::InvalidSpec(format!(
                "encoding scale must be positive, got {}",
                self.scale
            )));
        }
        if let Some(a) = self.axis_scales.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(ModelError::InvalidSpec(format!("axis scale must be positive, got {a}")));
        }
        Ok(())
    }

    /// Rejects axis scales that do not match `input_dim`.
    pub fn check_input_dim(&self, input_dim: usize) -> Result<(), ModelError> {
        if self.kind == EncodingKind::Fourier && !self.axis_scales.is_empty() && self.axis_scales.len() != input_dim {
            return Err(ModelError::InvalidSpec(format!(
                "{} axis scales for {input_dim} input axes",
                self.axis_scales.len()
            )));
        }
        Ok(())
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self.kind {
            EncodingKind::Identity => input_dim,
            EncodingKind::Fourier => 2 * self.num_frequencies() * input_dim,
        }
    }

    /// Angular frequency of feature pair `i` on `axis`, in units of the raw
    /// coordinate.
    fn omega(&self, i: usize, axis: usize) -> f64 {
        let a = self.axis_scales.get(axis).copied().unwrap_or(1.0);
        2.0 * PI * self.betas[i] * self.scale * a
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            EncodingKind::Identity => x.to_vec(),
            EncodingKind::Fourier => {
                let mut out = Vec::with_capacity(self.output_dim(x.len()));
                for (j, &xj) in x.iter().enumerate() {
                    for (i, &a) in self.alphas.iter().enumerate() {
                        let arg = self.omega(i, j) * xj;
                        out.push(a * arg.cos());
                        out.push(a * arg.sin());
                    }
                }
                out
            }
        }
    }

    /// Row-wise [`EncodingSpec::encode`].
    pub fn encode_batch(&self, coords: &Array2<f64>) -> Array2<f64> {
        let d = coords.ncols();
        let mut out = Array2::zeros((coords.nrows(), self.output_dim(d)));
        for (row, mut dst) in coords.rows().into_iter().zip(out.rows_mut()) {
            let enc = self.encode(row.as_slice().unwrap_or(&row.to_vec()));
            for (o, v) in dst.iter_mut().zip(enc) {
                *o = v;
            }
        }
        out
    }

    /// Derivative of the encoded features along coordinate `axis`, scaled by
    /// `direction`. The features do not depend on trainable parameters, so
    /// the tangent is a constant.
    pub fn tangent_batch(&self, coords: &Array2<f64>, axis: usize, direction: f64) -> Array2<f64> {
        let d = coords.ncols();
        let mut out = Array2::zeros((coords.nrows(), self.output_dim(d)));
        match self.kind {
            EncodingKind::Identity => out.column_mut(axis).fill(direction),
            EncodingKind::Fourier => {
                let k = self.num_frequencies();
                for (row, mut dst) in coords.rows().into_iter().zip(out.rows_mut()) {
                    let xj = row[axis];
                    for i in 0..k {
                        let w = self.omega(i, axis);
                        let a = self.alphas[i] * w * direction;
                        let arg = w * xj;
                        dst[axis * 2 * k + 2 * i] = -a * arg.sin();
                        dst[axis * 2 * k + 2 * i + 1] = a * arg.cos();
                    }
                }
            }
        }
        out
    }

    /// Encoding recorded on a scalar tape.
    pub fn encode_on_tape<S: TapeValue>(&self, tape: &mut Tape, x: &[S]) -> AdResult<Vec<S>> {
        match self.kind {
            EncodingKind::Identity => Ok(x.to_vec()),
            EncodingKind::Fourier => {
                let mut out = Vec::with_capacity(self.output_dim(x.len()));
                for (j, &xj) in x.iter().enumerate() {
                    for (i, &a) in self.alphas.iter().enumerate() {
                        let w = S::constant(tape, self.omega(i, j))?;
                        let arg = S::apply(tape, Op::Mul, &[w, xj])?;
                        let amp = S::constant(tape, a)?;
                        let c = S::apply(tape, Op::Cos, &[arg])?;
                        out.push(S::apply(tape, Op::Mul, &[amp, c])?);
                        let s = S::apply(tape, Op::Sin, &[arg])?;
                        out.push(S::apply(tape, Op::Mul, &[amp, s])?);
                    }
                }
                Ok(out)
            }
        }
    }
}
