//! Evaluation metrics: PSNR, SSIM, IOU and solution-error statistics.

use serde::{Deserialize, Serialize};

use crate::operators::ImageGrid;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("image {0}x{1} is smaller than the 11x11 SSIM window")]
    TooSmall(usize, usize),
    #[error("relative error undefined for an all-zero reference")]
    ZeroNorm,
    #[error("explained variance undefined for a constant reference")]
    ZeroVariance,
    #[error("empty input")]
    Empty,
}

fn same_shape(a: &ImageGrid, b: &ImageGrid) -> Result<(), MetricError> {
    if a.shape() != b.shape() {
        let s = |g: &ImageGrid| vec![g.height(), g.width(), g.channels()];
        return Err(MetricError::ShapeMismatch(s(a), s(b)));
    }
    Ok(())
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::ShapeMismatch(vec![a.len()], vec![b.len()]));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// `10 log10(peak^2 / MSE)`; identical inputs give `f64::INFINITY`.
pub fn psnr_values(a: &[f64], b: &[f64], peak: f64) -> Result<f64, MetricError> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

pub fn psnr(a: &ImageGrid, b: &ImageGrid, peak: f64) -> Result<f64, MetricError> {
    same_shape(a, b)?;
    psnr_values(a.data(), b.data(), peak)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows. Color images
/// are compared on their channel-mean luminance.
pub fn ssim(a: &ImageGrid, b: &ImageGrid, peak: f64) -> Result<f64, MetricError> {
    same_shape(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(MetricError::TooSmall(h, w));
    }
    let (la, lb) = (a.luminance(), b.luminance());
    let (x, y) = (la.data(), lb.data());
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let g = gaussian_window();
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for r in 0..oh {
        for c in 0..ow {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (i, gi) in g.iter().enumerate() {
                for (j, gj) in g.iter().enumerate() {
                    let wgt = gi * gj;
                    let p = (r + i) * w + c + j;
                    let (u, v) = (x[p], y[p]);
                    mx += wgt * u;
                    my += wgt * v;
                    sxx += wgt * u * u;
                    syy += wgt * v * v;
                    sxy += wgt * u * v;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cxy = sxy - mx * my;
            let num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
            let den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
        }
    }
    Ok(total / (oh * ow) as f64)
}

/// `|pred & truth| / |pred | truth|` after thresholding both at `threshold`
/// (values `>= threshold` count as occupied). Two empty sets give 1.
pub fn iou(pred: &[f64], truth: &[f64], threshold: f64) -> Result<f64, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::ShapeMismatch(vec![pred.len()], vec![truth.len()]));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        let (p, t) = (p >= threshold, t >= threshold);
        inter += (p && t) as usize;
        union += (p || t) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    pub abs_err: f64,
    pub rel_err: f64,
    pub explained_var: f64,
}

fn variance(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Mean absolute error, relative L2 error and explained variance
/// `1 - Var(t - p) / Var(t)`.
pub fn error_metrics(pred: &[f64], truth: &[f64]) -> Result<ErrorMetrics, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::ShapeMismatch(vec![pred.len()], vec![truth.len()]));
    }
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = pred.len() as f64;
    let abs_err = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let tnorm = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if tnorm == 0.0 {
        return Err(MetricError::ZeroNorm);
    }
    let enorm = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>().sqrt();
    let vt = variance(truth.iter().copied());
    if vt == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    let ve = variance(truth.iter().zip(pred).map(|(t, p)| t - p));
    Ok(ErrorMetrics {
        abs_err,
        rel_err: enorm / tnorm,
        explained_var: 1.0 - ve / vt,
    })
}

/// Final metrics of one run; each entry present only where the task defines it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    #[serde(default, skip_serializing_if = "Option::is_none", with = "extended_float")]
    pub psnr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_err: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_err: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explained_var: Option<f64>,
}

impl MetricReport {
    pub fn with_errors(e: ErrorMetrics) -> Self {
        Self {
            abs_err: Some(e.abs_err),
            rel_err: Some(e.rel_err),
            explained_var: Some(e.explained_var),
            ..Self::default()
        }
    }

    /// Checks the documented value ranges.
    pub fn is_consistent(&self) -> bool {
        self.ssim.is_none_or(|s| (-1.0..=1.0).contains(&s))
            && self.iou.is_none_or(|s| (0.0..=1.0).contains(&s))
            && self.rel_err.is_none_or(|s| s >= 0.0)
            && self.explained_var.is_none_or(|s| s <= 1.0)
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        let mut push = |name: &str, v: Option<f64>| {
            if let Some(v) = v {
                parts.push(format!("{name}={v:.6}"));
            }
        };
        push("psnr_db", self.psnr_db);
        push("ssim", self.ssim);
        push("iou", self.iou);
        push("abs_err", self.abs_err);
        push("rel_err", self.rel_err);
        push("explained_var", self.explained_var);
        parts.join(" ")
    }
}

/// Optional floats where infinities are written as the strings `"inf"` and
/// `"-inf"` (JSON has no infinity literal).
pub mod extended_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if *x == f64::INFINITY => s.serialize_str("inf"),
            Some(x) if *x == f64::NEG_INFINITY => s.serialize_str("-inf"),
            Some(x) => s.serialize_f64(*x),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) => match t.as_str() {
                "inf" => Ok(Some(f64::INFINITY)),
                "-inf" => Ok(Some(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got \"{other}\""))),
            },
        }
    }
}
