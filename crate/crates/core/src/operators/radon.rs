//! Parallel-beam Radon transform by rotate-then-sum.
//!
//! For angle `theta` the image is resampled on a `D x D` canvas, `D` the
//! ceiling of the image diagonal, with canvas pixel `(v, u)` reading the image
//! at the point obtained by rotating `(u, v) - center` by `theta` about the
//! image center. Sampling is bilinear with zero padding. Summing canvas column
//! `u` over `v` gives detector bin `u`.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ImageGrid, OperatorError};
use crate::autodiff::batch::{Graph, LinearMap};

/// Projections, one row per angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub angles: Vec<f64>,
    pub bins: usize,
    /// `angles x bins`.
    pub values: Array2<f64>,
}

pub fn detector_bins(height: usize, width: usize) -> usize {
    ((height * height + width * width) as f64).sqrt().ceil() as usize
}

/// `n` angles evenly spaced over `[0, pi)`.
pub fn uniform_angles(n: usize) -> Vec<f64> {
    (0..n).map(|i| std::f64::consts::PI * i as f64 / n as f64).collect()
}

/// Calls `tap(bin, pixel, weight)` for every bilinear tap of one angle.
fn for_each_tap(height: usize, width: usize, theta: f64, mut tap: impl FnMut(usize, usize, f64)) {
    let d = detector_bins(height, width);
    let cd = (d as f64 - 1.0) / 2.0;
    let (ch, cw) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    let (s, c) = theta.sin_cos();
    for u in 0..d {
        let du = u as f64 - cd;
        for v in 0..d {
            let dv = v as f64 - cd;
            let sx = c * du - s * dv + cw;
            let sy = s * du + c * dv + ch;
            let (x0, y0) = (sx.floor(), sy.floor());
            if x0 < -1.0 || y0 < -1.0 || x0 > width as f64 - 1.0 || y0 > height as f64 - 1.0 {
                continue;
            }
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                let y = y0 + dy;
                if y < 0 || y >= height as isize || wy == 0.0 {
                    continue;
                }
                for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let x = x0 + dx;
                    if x < 0 || x >= width as isize || wx == 0.0 {
                        continue;
                    }
                    tap(u, y as usize * width + x as usize, wy * wx);
                }
            }
        }
    }
}

/// Sinogram of a single-channel image.
pub fn radon(img: &ImageGrid, angles: &[f64]) -> Result<Sinogram, OperatorError> {
    if img.channels() != 1 {
        return Err(OperatorError::MultiChannel(img.channels()));
    }
    let (h, w) = (img.height(), img.width());
    let bins = detector_bins(h, w);
    let mut values = Array2::zeros((angles.len(), bins));
    let data = img.data();
    for (a, &theta) in angles.iter().enumerate() {
        let mut row = values.row_mut(a);
        for_each_tap(h, w, theta, |u, p, wgt| row[u] += wgt * data[p]);
    }
    Ok(Sinogram {
        angles: angles.to_vec(),
        bins,
        values,
    })
}

/// The Radon transform as a sparse matrix, rows ordered angle-major then by
/// bin, columns the image pixels in row-major order.
#[derive(Debug, Clone)]
pub struct RadonOperator {
    height: usize,
    width: usize,
    angles: Vec<f64>,
    bins: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    weights: Vec<f64>,
}

impl RadonOperator {
    pub fn new(height: usize, width: usize, angles: &[f64]) -> Self {
        let bins = detector_bins(height, width);
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut weights = Vec::new();
        let mut dense = vec![0.0; height * width];
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); bins];
        for &theta in angles {
            // gather taps per bin, then merge duplicates through a dense row
            for r in rows.iter_mut() {
                r.clear();
            }
            for_each_tap(height, width, theta, |u, p, w| rows[u].push((p, w)));
            for row in rows.iter() {
                let mut order: Vec<usize> = Vec::with_capacity(row.len());
                for &(p, w) in row {
                    if dense[p] == 0.0 {
                        order.push(p);
                    }
                    dense[p] += w;
                }
                order.sort_unstable();
                order.dedup();
                for p in order {
                    col_idx.push(p as u32);
                    weights.push(dense[p]);
                    dense[p] = 0.0;
                }
                row_ptr.push(col_idx.len());
            }
        }
        Self {
            height,
            width,
            angles: angles.to_vec(),
            bins,
            row_ptr,
            col_idx,
            weights,
        }
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn nnz(&self) -> usize {
        self.weights.len()
    }

    /// Sinogram of `img` via the stored matrix.
    pub fn forward(&self, img: &ImageGrid) -> Result<Sinogram, OperatorError> {
        if img.channels() != 1 {
            return Err(OperatorError::MultiChannel(img.channels()));
        }
        if (img.height(), img.width()) != (self.height, self.width) {
            return Err(OperatorError::ShapeMismatch(format!(
                "operator built for {}x{}, image is {}x{}",
                self.height,
                self.width,
                img.height(),
                img.width()
            )));
        }
        let mut out = vec![0.0; self.rows()];
        self.apply(img.data(), &mut out);
        Ok(Sinogram {
            angles: self.angles.clone(),
            bins: self.bins,
            values: Array2::from_shape_vec((self.angles.len(), self.bins), out).expect("shape"),
        })
    }
}

impl LinearMap for RadonOperator {
    fn rows(&self) -> usize {
        self.angles.len() * self.bins
    }

    fn cols(&self) -> usize {
        self.height * self.width
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            *out = self.col_idx[a..b]
                .iter()
                .zip(&self.weights[a..b])
                .map(|(&c, &w)| w * x[c as usize])
                .sum();
        }
    }

    fn apply_transpose_add(&self, y: &[f64], x: &mut [f64]) {
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            for (&c, &w) in self.col_idx[a..b].iter().zip(&self.weights[a..b]) {
                x[c as usize] += w * yr;
            }
        }
    }
}

/// Relative mismatch between `<A x, y>` and `<x, A^T y>` for random `x`, `y`,
/// with `A^T y` taken from the reverse pass of the training graph.
pub fn radon_adjoint_check(size: usize, angles: &[f64], seed: u64) -> f64 {
    let op = Arc::new(RadonOperator::new(size, size, angles));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..op.cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..op.rows()).map(|_| rng.random_range(-1.0..1.0)).collect();
    adjoint_mismatch(op, &x, &y)
}

/// `<A x, y>` versus `<x, A^T y>` for the given vectors.
pub fn adjoint_mismatch(op: Arc<RadonOperator>, x: &[f64], y: &[f64]) -> f64 {
    let mut ax = vec![0.0; op.rows()];
    op.apply(x, &mut ax);
    let lhs: f64 = ax.iter().zip(y).map(|(a, b)| a * b).sum();

    // d/dx mean(A x * y) * len = A^T y
    let mut g = Graph::new();
    let xv = g.param(Array2::from_shape_vec((x.len(), 1), x.to_vec()).expect("shape"));
    let yv = g.constant(Array2::from_shape_vec((y.len(), 1), y.to_vec()).expect("shape"));
    let lin = g.linear(xv, op.clone());
    let prod = g.mul(lin, yv);
    let m = g.mean(prod);
    let loss = g.scale(m, y.len() as f64);
    let aty = g.backward(loss).flatten();
    let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
    crate::autodiff::relative_error(lhs, rhs)
}
