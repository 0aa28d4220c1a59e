//! Central-difference gradient oracle.

use super::{Node, Result, Tape};

/// Kink tolerance, relative to the gradient magnitude.
const KINK_REL: f64 = 1e-6;
/// Rounding allowance in units of `eps * |f| / h`.
const NOISE_FACTOR: f64 = 64.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FdEntry {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
    /// False when the one-sided slopes disagree in a way no smooth function
    /// can produce at this step size (a ReLU kink inside `[x-h, x+h]`).
    pub smooth: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FdReport {
    pub entries: Vec<FdEntry>,
}

impl FdReport {
    /// Largest relative error over smooth coordinates.
    pub fn max_rel_err(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.smooth)
            .map(|e| e.rel_err)
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&FdEntry> {
        self.entries
            .iter()
            .filter(|e| e.smooth)
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }

    pub fn checked(&self) -> usize {
        self.entries.iter().filter(|e| e.smooth).count()
    }

    pub fn skipped(&self) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| !e.smooth)
            .map(|e| e.index)
            .collect()
    }
}

/// `|a - n| / max(|a|, |n|)`, zero when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let den = analytic.abs().max(numeric.abs());
    if den == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / den
    }
}

/// Compares `analytic[i]` with central differences of `value` for each index
/// in `coords` (all coordinates when `None`).
pub fn compare_with_finite_differences(
    value: impl Fn(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    h: f64,
    coords: Option<&[usize]>,
) -> FdReport {
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..point.len()).collect();
            &all
        }
    };
    let f0 = value(point);
    let mut x = point.to_vec();
    let at = |i: usize, dx: f64, x: &mut Vec<f64>| {
        x[i] = point[i] + dx;
        let v = value(x);
        x[i] = point[i];
        v
    };
    let entries = coords
        .iter()
        .map(|&i| {
            let fp = at(i, h, &mut x);
            let fm = at(i, -h, &mut x);
            let fp2 = at(i, 0.5 * h, &mut x);
            let fm2 = at(i, -0.5 * h, &mut x);
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[i];

            // One-sided slopes at h and h/2 differ by h f''/4 for smooth f;
            // anything else means a slope discontinuity nearby.
            let curv = (fp - 2.0 * f0 + fm) / (h * h);
            let fwd = (fp - f0) / h - (fp2 - f0) / (0.5 * h);
            let bwd = (f0 - fm) / h - (f0 - fm2) / (0.5 * h);
            let residual = (fwd - 0.25 * h * curv)
                .abs()
                .max((bwd + 0.25 * h * curv).abs());
            let fmax = [f0, fp, fm, fp2, fm2].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let noise = NOISE_FACTOR * f64::EPSILON * fmax / h;
            let smooth = residual <= KINK_REL * a.abs().max(numeric.abs()) + noise;

            FdEntry {
                index: i,
                analytic: a,
                numeric,
                // slopes below the round-off floor are indistinguishable from zero
                rel_err: (a - numeric).abs() / a.abs().max(numeric.abs()).max(f64::EPSILON * fmax / h).max(f64::MIN_POSITIVE),
                smooth,
            }
        })
        .collect();
    FdReport { entries }
}

/// Gradient check for a function recorded on a scalar tape. `f` receives the
/// trainable leaves for `point` and returns the scalar output node.
pub fn finite_difference_check<F>(f: F, point: &[f64], h: f64) -> Result<FdReport>
where
    F: Fn(&mut Tape, &[Node]) -> Result<Node>,
{
    let eval = |p: &[f64]| -> Result<(Tape, Vec<Node>, Node)> {
        let mut tape = Tape::new();
        let leaves = p
            .iter()
            .map(|&v| tape.leaf(v, true))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &leaves)?;
        Ok((tape, leaves, out))
    };
    let (tape, leaves, out) = eval(point)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<f64> = leaves.iter().map(|&l| grads.wrt(l)).collect();
    let value = |p: &[f64]| eval(p).map(|(_, _, o)| o.value()).unwrap_or(f64::NAN);
    Ok(compare_with_finite_differences(value, point, &analytic, h, None))
}
