//! Image grids, procedural test images and image-domain degradations.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::OperatorError;
use crate::autodiff::batch::LinearMap;

/// What to do with values outside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipPolicy {
    /// Values stay as computed (noisy measurements).
    #[default]
    None,
    /// Values are clamped to `[0, 1]` when quantized or displayed.
    Clamp,
}

/// Row-major `H x W x C` image. Pixel `(row, col)` has its center at
/// `x = (2 col + 1) / W - 1`, `y = (2 row + 1) / H - 1`, so the centers of a
/// box-downsampled grid coincide with the block means of the fine grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
    pub clip: ClipPolicy,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self, OperatorError> {
        if height == 0 || width == 0 || !(channels == 1 || channels == 3) {
            return Err(OperatorError::InvalidParameter(format!(
                "image shape {height}x{width}x{channels} (channels must be 1 or 3)"
            )));
        }
        if data.len() != height * width * channels {
            return Err(OperatorError::ShapeMismatch(format!(
                "{} values for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(OperatorError::InvalidParameter(format!("non-finite pixel value {v}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            clip: ClipPolicy::None,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels]).expect("valid shape")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        self.data[(row * self.width + col) * self.channels + ch] = v;
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Channel-mean luminance as a single-channel image.
    pub fn luminance(&self) -> ImageGrid {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks(self.channels)
            .map(|px| px.iter().sum::<f64>() / self.channels as f64)
            .collect();
        ImageGrid::new(self.height, self.width, 1, data).expect("valid shape")
    }

    /// Pixel-center coordinates `(x, y)` in `[-1, 1]^2`, one row per pixel,
    /// in row-major pixel order.
    pub fn coords(&self) -> Array2<f64> {
        pixel_coords(self.height, self.width)
    }

    /// Pixel values as an `(H W) x C` matrix matching [`ImageGrid::coords`].
    pub fn values(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.height * self.width, self.channels), self.data.clone()).expect("shape")
    }

    pub fn from_values(height: usize, width: usize, values: &Array2<f64>) -> Result<Self, OperatorError> {
        if values.nrows() != height * width {
            return Err(OperatorError::ShapeMismatch(format!(
                "{} rows for a {height}x{width} image",
                values.nrows()
            )));
        }
        Self::new(height, width, values.ncols(), values.iter().copied().collect())
    }

    /// Bilinear sample at fractional pixel position `(row, col)` (pixel
    /// centers at integers), clamping to the border.
    pub fn sample_clamped(&self, row: f64, col: f64, ch: usize) -> f64 {
        let r = row.clamp(0.0, (self.height - 1) as f64);
        let c = col.clamp(0.0, (self.width - 1) as f64);
        let r0 = r.floor() as usize;
        let c0 = c.floor() as usize;
        let r1 = (r0 + 1).min(self.height - 1);
        let c1 = (c0 + 1).min(self.width - 1);
        let fr = r - r0 as f64;
        let fc = c - c0 as f64;
        let top = self.get(r0, c0, ch) * (1.0 - fc) + self.get(r0, c1, ch) * fc;
        let bottom = self.get(r1, c0, ch) * (1.0 - fc) + self.get(r1, c1, ch) * fc;
        top * (1.0 - fr) + bottom * fr
    }
}

/// Cell-centered coordinates of an `h x w` grid.
pub fn pixel_coords(h: usize, w: usize) -> Array2<f64> {
    let mut out = Array2::zeros((h * w, 2));
    for r in 0..h {
        for c in 0..w {
            out[[r * w + c, 0]] = (2 * c + 1) as f64 / w as f64 - 1.0;
            out[[r * w + c, 1]] = (2 * r + 1) as f64 / h as f64 - 1.0;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageKind {
    /// Random truncated Fourier series, normalized to `[0, 1]`.
    Bandlimited,
    /// 8 x 8 board of alternating 0/1 blocks.
    Checker,
    /// Random disks of varying intensity on a dark background.
    DiskScene,
}

impl std::str::FromStr for ImageKind {
    type Err = OperatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bandlimited" => Ok(ImageKind::Bandlimited),
            "checker" => Ok(ImageKind::Checker),
            "disk_scene" => Ok(ImageKind::DiskScene),
            _ => Err(OperatorError::InvalidParameter(format!("unknown image kind '{s}'"))),
        }
    }
}

/// Highest spatial frequency (cycles per image) of the bandlimited image.
const BAND: i32 = 8;

pub fn procedural_image(
    kind: ImageKind,
    height: usize,
    width: usize,
    channels: usize,
    seed: u64,
) -> Result<ImageGrid, OperatorError> {
    if height < 8 || width < 8 {
        return Err(OperatorError::TooSmall(format!("procedural images need H, W >= 8, got {height}x{width}")));
    }
    let mut img = ImageGrid::filled(height, width, channels, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        ImageKind::Checker => {
            let br = (height / 8).max(1);
            let bc = (width / 8).max(1);
            for r in 0..height {
                for c in 0..width {
                    let v = ((r / br + c / bc) % 2) as f64;
                    for ch in 0..channels {
                        img.set(r, c, ch, v);
                    }
                }
            }
        }
        ImageKind::Bandlimited => {
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            for ch in 0..channels {
                let mut terms = Vec::new();
                for ky in -BAND..=BAND {
                    for kx in 0..=BAND {
                        if kx == 0 && ky <= 0 {
                            continue;
                        }
                        let k2 = (kx * kx + ky * ky) as f64;
                        let amp = normal.sample(&mut rng) / (1.0 + k2).powf(0.75);
                        let phase = rng.random_range(-PI..PI);
                        terms.push((kx as f64, ky as f64, amp, phase));
                    }
                }
                for r in 0..height {
                    let v = r as f64 / height as f64;
                    for c in 0..width {
                        let u = c as f64 / width as f64;
                        let s: f64 = terms
                            .iter()
                            .map(|&(kx, ky, a, p)| a * (2.0 * PI * (kx * u + ky * v) + p).cos())
                            .sum();
                        img.set(r, c, ch, s);
                    }
                }
            }
            normalize(&mut img.data);
        }
        ImageKind::DiskScene => {
            let n = 6;
            let bg: Vec<f64> = (0..channels).map(|_| rng.random_range(0.0..0.2)).collect();
            let disks: Vec<(f64, f64, f64, Vec<f64>)> = (0..n)
                .map(|_| {
                    let cx = rng.random_range(-0.6..0.6);
                    let cy = rng.random_range(-0.6..0.6);
                    let rad = rng.random_range(0.1..0.35);
                    let val = (0..channels).map(|_| rng.random_range(0.3..1.0)).collect();
                    (cx, cy, rad, val)
                })
                .collect();
            let coords = img.coords();
            for (p, xy) in coords.rows().into_iter().enumerate() {
                let (r, c) = (p / width, p % width);
                for ch in 0..channels {
                    let mut v = bg[ch];
                    for (cx, cy, rad, val) in &disks {
                        if (xy[0] - cx).powi(2) + (xy[1] - cy).powi(2) <= rad * rad {
                            v = val[ch];
                        }
                    }
                    img.set(r, c, ch, v);
                }
            }
        }
    }
    Ok(img)
}

fn normalize(data: &mut [f64]) {
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for v in data.iter_mut() {
        *v = if span > 0.0 { ((*v - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
    }
}

/// Single-channel `n x n` image of the radial profile `f(r)`, `r` measured in
/// pixels from the image center.
pub fn radial_image(n: usize, f: impl Fn(f64) -> f64) -> ImageGrid {
    let c = (n as f64 - 1.0) / 2.0;
    let mut data = Vec::with_capacity(n * n);
    for r in 0..n {
        for col in 0..n {
            let d = ((r as f64 - c).powi(2) + (col as f64 - c).powi(2)).sqrt();
            data.push(f(d));
        }
    }
    ImageGrid::new(n, n, 1, data).expect("valid shape")
}

/// Rotationally symmetric bump `(1 - r^2 / R^2)^2` with `R = 0.48 n`: smooth
/// enough that bilinear resampling barely distinguishes rotations.
pub fn bump_phantom(n: usize) -> ImageGrid {
    let rr = 0.48 * n as f64;
    radial_image(n, |r| if r < rr { (1.0 - r * r / (rr * rr)).powi(2) } else { 0.0 })
}

/// Mean over `k x k` blocks, per channel.
pub fn downsample_box(img: &ImageGrid, k: usize) -> Result<ImageGrid, OperatorError> {
    if k == 0 || !img.height.is_multiple_of(k) || !img.width.is_multiple_of(k) {
        return Err(OperatorError::NotDivisible {
            height: img.height,
            width: img.width,
            factor: k,
        });
    }
    let (h, w, ch) = (img.height / k, img.width / k, img.channels);
    let mut out = ImageGrid::filled(h, w, ch, 0.0);
    out.clip = img.clip;
    let inv = 1.0 / (k * k) as f64;
    for r in 0..h {
        for c in 0..w {
            for chn in 0..ch {
                let mut s = 0.0;
                for dr in 0..k {
                    for dc in 0..k {
                        s += img.get(r * k + dr, c * k + dc, chn);
                    }
                }
                out.set(r, c, chn, s * inv);
            }
        }
    }
    Ok(out)
}

/// [`downsample_box`] as a linear map on row-major pixel vectors of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxDownsample {
    height: usize,
    width: usize,
    factor: usize,
}

impl BoxDownsample {
    pub fn new(height: usize, width: usize, factor: usize) -> Result<Self, OperatorError> {
        if factor == 0 || !height.is_multiple_of(factor) || !width.is_multiple_of(factor) {
            return Err(OperatorError::NotDivisible { height, width, factor });
        }
        Ok(Self { height, width, factor })
    }
}

impl LinearMap for BoxDownsample {
    fn rows(&self) -> usize {
        (self.height / self.factor) * (self.width / self.factor)
    }

    fn cols(&self) -> usize {
        self.height * self.width
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let k = self.factor;
        let lw = self.width / k;
        let inv = 1.0 / (k * k) as f64;
        y.fill(0.0);
        for r in 0..self.height {
            for c in 0..self.width {
                y[(r / k) * lw + c / k] += x[r * self.width + c];
            }
        }
        for v in y.iter_mut() {
            *v *= inv;
        }
    }

    fn apply_transpose_add(&self, y: &[f64], x: &mut [f64]) {
        let k = self.factor;
        let lw = self.width / k;
        let inv = 1.0 / (k * k) as f64;
        for r in 0..self.height {
            for c in 0..self.width {
                x[r * self.width + c] += inv * y[(r / k) * lw + c / k];
            }
        }
    }
}

/// One low-resolution observation of a multiview set.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub image: ImageGrid,
    /// Translation in high-resolution pixels, `(dx, dy)`.
    pub shift: (f64, f64),
    /// Rotation about the image center, radians.
    pub rotation: f64,
    /// Position of each low-resolution pixel center in the high-resolution
    /// frame, as `[-1, 1]^2` coordinates (row-major).
    pub coords: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiviewSet {
    pub views: Vec<View>,
    pub factor: usize,
}

impl MultiviewSet {
    /// Union of all views' coordinates.
    pub fn coords(&self) -> Array2<f64> {
        let rows: usize = self.views.iter().map(|v| v.coords.nrows()).sum();
        let mut out = Array2::zeros((rows, 2));
        let mut i = 0;
        for v in &self.views {
            for row in v.coords.rows() {
                out.row_mut(i).assign(&row);
                i += 1;
            }
        }
        out
    }

    /// Pixel values aligned with [`MultiviewSet::coords`].
    pub fn values(&self) -> Array2<f64> {
        let ch = self.views[0].image.channels();
        let data: Vec<f64> = self.views.iter().flat_map(|v| v.image.data().iter().copied()).collect();
        Array2::from_shape_vec((data.len() / ch, ch), data).expect("shape")
    }
}

/// Warp `img` so that output pixel `p` shows the source at `R(rot) (p - c) + c + shift`,
/// `c` the image center, bilinear with border clamping.
fn warp(img: &ImageGrid, shift: (f64, f64), rot: f64) -> ImageGrid {
    if shift == (0.0, 0.0) && rot == 0.0 {
        return img.clone();
    }
    let (h, w, ch) = img.shape();
    let (cr, cc) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (s, co) = rot.sin_cos();
    let mut out = img.clone();
    for r in 0..h {
        for c in 0..w {
            let (dx, dy) = (c as f64 - cc, r as f64 - cr);
            let sx = co * dx - s * dy + cc + shift.0;
            let sy = s * dx + co * dy + cr + shift.1;
            for chn in 0..ch {
                out.set(r, c, chn, img.sample_clamped(sy, sx, chn));
            }
        }
    }
    out
}

/// Builds `n_views` low-resolution views. View 0 has no motion; the others
/// draw a shift in `+-max_shift` pixels per axis and a rotation in
/// `+-max_rot` radians.
pub fn make_multiview(
    img: &ImageGrid,
    n_views: usize,
    k: usize,
    max_shift: f64,
    max_rot: f64,
    seed: u64,
) -> Result<MultiviewSet, OperatorError> {
    if n_views == 0 {
        return Err(OperatorError::InvalidParameter("n_views must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |bound: f64, rng: &mut ChaCha8Rng| if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 };
    let (h, w) = (img.height() as f64, img.width() as f64);
    let (cr, cc) = ((h - 1.0) / 2.0, (w - 1.0) / 2.0);
    let mut views = Vec::with_capacity(n_views);
    for v in 0..n_views {
        let (shift, rotation) = if v == 0 {
            ((0.0, 0.0), 0.0)
        } else {
            let dx = draw(max_shift, &mut rng);
            let dy = draw(max_shift, &mut rng);
            ((dx, dy), draw(max_rot, &mut rng))
        };
        let image = downsample_box(&warp(img, shift, rotation), k)?;
        let (lh, lw) = (image.height(), image.width());
        let (s, co) = rotation.sin_cos();
        let mut coords = Array2::zeros((lh * lw, 2));
        for r in 0..lh {
            for c in 0..lw {
                // block center in fine pixel units, then the warp
                let px = (c * k) as f64 + (k as f64 - 1.0) / 2.0 - cc;
                let py = (r * k) as f64 + (k as f64 - 1.0) / 2.0 - cr;
                let sx = co * px - s * py + cc + shift.0;
                let sy = s * px + co * py + cr + shift.1;
                coords[[r * lw + c, 0]] = (2.0 * sx + 1.0) / w - 1.0;
                coords[[r * lw + c, 1]] = (2.0 * sy + 1.0) / h - 1.0;
            }
        }
        views.push(View {
            image,
            shift,
            rotation,
            coords,
        });
    }
    Ok(MultiviewSet { views, factor: k })
}

/// Photon-limited observation: `Poisson(v * max_count) / max_count` per
/// value, no clipping.
pub fn poisson_photon_noise(img: &ImageGrid, max_count: f64, seed: u64) -> Result<ImageGrid, OperatorError> {
    if !(max_count.is_finite() && max_count > 0.0) {
        return Err(OperatorError::InvalidParameter(format!("max_count must be positive, got {max_count}")));
    }
    if let Some(v) = img.data.iter().find(|v| **v < 0.0) {
        return Err(OperatorError::InvalidParameter(format!("negative intensity {v}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    out.clip = ClipPolicy::None;
    for v in out.data.iter_mut() {
        let mean = *v * max_count;
        let count = if mean > 0.0 {
            Poisson::new(mean).expect("positive mean").sample(&mut rng)
        } else {
            0.0
        };
        *v = count / max_count;
    }
    Ok(out)
}
