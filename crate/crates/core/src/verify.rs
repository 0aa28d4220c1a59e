//! Built-in oracle suite: gradient checks against finite differences, the
//! second-order PDE path, operator identities and metric identities.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::batch::{Graph, LinearMap};
use crate::autodiff::{compare_with_finite_differences, FdReport, Tape};
use crate::metrics::{error_metrics, iou, psnr, ssim};
use crate::models::{EncodingSpec, LearnedActivation, Model, ModelKind, ModelSpec};
use crate::operators::{
    adjoint_mismatch, bump_phantom, pixel_coords, procedural_image, radon, sample_convection_points,
    uniform_angles, BoxDownsample, ConvectionPoints, ConvectionProblem, ImageGrid, ImageKind, RadonOperator,
};
use crate::training::{AdamState, ExactConvection, Field, FieldFit, Objective, PinnDomain, PinnObjective, PinnWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    /// `value <= tol`, reported with both numbers.
    fn at_most(name: &'static str, value: f64, tol: f64) -> Self {
        Self::new(name, value <= tol, format!("{value:.3e} (tolerance {tol:.0e})"))
    }
}

/// NestNet of width 32, depth 2, K = 8, as used by the gradient checks.
pub fn gradient_check_model(input_dim: usize, output_dim: usize, seed: u64) -> Model {
    let mut spec = ModelSpec::new(ModelKind::Nestnet, input_dim, output_dim, 32, 2);
    spec.encoding = EncodingSpec::fourier(8).with_scale(0.5);
    Model::build(&spec, seed).expect("valid spec")
}

/// Gradient of `objective` at the model's parameters against central
/// differences over `n` randomly chosen parameters.
pub fn objective_gradient_report(model: &Model, objective: &dyn Objective, n: usize, h: f64, seed: u64) -> FdReport {
    let p0 = model.parameters();
    let mut g = Graph::new();
    let vars = model.register_params(&mut g);
    let loss = objective.loss(&mut g, model, &vars);
    let grad = g.backward(loss).flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<usize> = (0..n).map(|_| rng.random_range(0..p0.len())).collect();
    let value = |p: &[f64]| {
        let mut m = model.clone();
        m.set_parameters(p).expect("same length");
        let mut g = Graph::new();
        let vars = m.constant_params(&mut g);
        let l = objective.loss(&mut g, &m, &vars);
        g.scalar(l)
    };
    compare_with_finite_differences(value, &p0, &grad, h, Some(&coords))
}

fn small_points(seed: u64) -> ConvectionPoints {
    sample_convection_points(&ConvectionProblem {
        beta: 10.0,
        n_ic: 32,
        n_bc: 16,
        n_col: 64,
        seed,
    })
    .expect("valid problem")
}

/// `(name, report)` for each loss kind: direct L2, L2 through the
/// downsampling and Radon operators, and the composite PDE loss.
pub fn loss_gradient_reports(n: usize) -> Vec<(&'static str, FdReport)> {
    let h = 1e-6;
    let img = procedural_image(ImageKind::Bandlimited, 16, 16, 1, 3).expect("valid image");
    let coords = pixel_coords(16, 16);
    let mut out = Vec::new();

    let m = gradient_check_model(2, 1, 0);
    let fit = FieldFit::new(&m, &coords, img.values()).expect("shapes");
    out.push(("pointwise_l2", objective_gradient_report(&m, &fit, n, h, 1)));

    let down = Arc::new(BoxDownsample::new(16, 16, 2).expect("divisible"));
    let low = crate::operators::downsample_box(&img, 2).expect("divisible");
    let fit = FieldFit::through(&m, &coords, down, low.values()).expect("shapes");
    out.push(("downsampled_l2", objective_gradient_report(&m, &fit, n, h, 2)));

    let op = Arc::new(RadonOperator::new(16, 16, &uniform_angles(8)));
    let sino = op.forward(&img).expect("grayscale");
    let target = sino.values.to_shape((op.rows(), 1)).expect("contiguous").to_owned();
    let fit = FieldFit::through(&m, &coords, op, target).expect("shapes");
    out.push(("radon_l2", objective_gradient_report(&m, &fit, n, h, 3)));

    let m = gradient_check_model(2, 1, 1);
    let pinn = PinnObjective::new(&m, &small_points(0), 10.0, PinnWeights::default()).expect("weights");
    out.push(("pinn_convection", objective_gradient_report(&m, &pinn, n, h, 4)));
    out
}

/// Mean convection residual `u_t + beta u_x` over `points` (raw `(x, t)`
/// rows), recorded on a batch graph.
fn residual_loss(model: &Model, params_are_vars: bool, points: &Array2<f64>, beta: f64) -> (f64, Vec<f64>) {
    let input = model
        .encode_inputs(&PinnDomain::normalize(points), &PinnDomain::seeds())
        .expect("2-d input");
    let mut g = Graph::new();
    let vars = if params_are_vars {
        model.register_params(&mut g)
    } else {
        model.constant_params(&mut g)
    };
    let x = input.to_dual(&mut g);
    let out = model.forward_batch(&mut g, &vars, &x);
    let ut = out.tangents[0].expect("seeded");
    let ux = out.tangents[1].expect("seeded");
    let bux = g.scale(ux, beta);
    let r = g.add(ut, bux);
    let m = g.mean(r);
    let v = g.scalar(m);
    let grad = if params_are_vars { g.backward(m).flatten() } else { Vec::new() };
    (v, grad)
}

/// Parameter gradient of the mean residual against finite differences of the
/// residual itself.
pub fn residual_gradient_report(n: usize, seed: u64) -> FdReport {
    let m = gradient_check_model(2, 1, seed);
    let pts = small_points(seed).collocation;
    let (_, grad) = residual_loss(&m, true, &pts, 10.0);
    let p0 = m.parameters();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let coords: Vec<usize> = (0..n).map(|_| rng.random_range(0..p0.len())).collect();
    let value = |p: &[f64]| {
        let mut mm = m.clone();
        mm.set_parameters(p).expect("same length");
        residual_loss(&mm, false, &pts, 10.0).0
    };
    compare_with_finite_differences(value, &p0, &grad, 1e-6, Some(&coords))
}

/// Residual of `sin(x - beta t)` at `n` random points, from dual tangents on
/// the scalar tape.
pub fn exact_solution_residuals(beta: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = ExactConvection { beta };
    (0..n)
        .map(|_| {
            let x0 = rng.random_range(0.0..crate::operators::X_MAX);
            let t0 = rng.random_range(0.0..crate::operators::T_MAX);
            let mut tape = Tape::new();
            let x = tape.leaf(x0, false).expect("finite");
            let t = tape.leaf(t0, false).expect("finite");
            let dx = tape.dual_seed(x, 0.0).expect("seed");
            let dt = tape.dual_seed(t, 1.0).expect("seed");
            let ut = field.eval(&mut tape, dx, dt).expect("exact field").tangent.value();
            let dx = tape.dual_seed(x, 1.0).expect("seed");
            let dt = tape.dual_seed(t, 0.0).expect("seed");
            let ux = field.eval(&mut tape, dx, dt).expect("exact field").tangent.value();
            ut + beta * ux
        })
        .collect()
}

/// Largest `|f(x) - f(x')|` over angles for a rotationally symmetric bump,
/// relative to the peak projection value.
pub fn radon_symmetry_error(n: usize, angles: usize) -> f64 {
    let img = bump_phantom(n);
    let s = radon(&img, &uniform_angles(angles)).expect("grayscale");
    let peak = s.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let first = s.values.row(0);
    s.values
        .rows()
        .into_iter()
        .flat_map(|r| r.iter().zip(first.iter()).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
        .fold(0.0f64, f64::max)
        / peak
}

/// Largest relative deviation of any projection's total from the image mass.
pub fn radon_mass_error(n: usize, angles: usize) -> f64 {
    let img = bump_phantom(n);
    let mass: f64 = img.data().iter().sum();
    let s = radon(&img, &uniform_angles(angles)).expect("grayscale");
    s.values
        .rows()
        .into_iter()
        .map(|r| (r.sum() - mass).abs() / mass)
        .fold(0.0, f64::max)
}

/// `|A(a x + b y) - (a A x + b A y)|_inf` relative to the largest output.
pub fn radon_linearity_error(n: usize, angles: usize, seed: u64) -> f64 {
    let x = procedural_image(ImageKind::Bandlimited, n, n, 1, seed).expect("valid image");
    let y = procedural_image(ImageKind::DiskScene, n, n, 1, seed + 1).expect("valid image");
    let (a, b) = (0.7, -1.3);
    let combo: Vec<f64> = x.data().iter().zip(y.data()).map(|(u, v)| a * u + b * v).collect();
    let combo = ImageGrid::new(n, n, 1, combo).expect("same shape");
    let th = uniform_angles(angles);
    let sx = radon(&x, &th).expect("grayscale").values;
    let sy = radon(&y, &th).expect("grayscale").values;
    let sc = radon(&combo, &th).expect("grayscale").values;
    let expect = &sx * a + &sy * b;
    let scale = expect.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    (&sc - &expect).iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale
}

/// Relative `<A x, y> - <x, A^T y>` mismatch with random `x`, `y`.
pub fn radon_adjoint_error(n: usize, angles: usize, seed: u64) -> f64 {
    let op = Arc::new(RadonOperator::new(n, n, &uniform_angles(angles)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..op.cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..op.rows()).map(|_| rng.random_range(-1.0..1.0)).collect();
    adjoint_mismatch(op, &x, &y)
}

fn metric_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let img = procedural_image(ImageKind::Bandlimited, 32, 32, 1, 0).expect("valid image");
    let p = psnr(&img, &img, 1.0).expect("same shape");
    out.push(Check::new("psnr_identical_is_inf", p == f64::INFINITY, format!("{p}")));
    let a = vec![0.2; 64];
    let b = vec![0.3; 64];
    let p = crate::metrics::psnr_values(&a, &b, 1.0).expect("same shape");
    out.push(Check::at_most("psnr_uniform_0.1_is_20db", (p - 20.0).abs(), 1e-12));
    let s = ssim(&img, &img, 1.0).expect("large enough");
    out.push(Check::at_most("ssim_identical_is_1", (s - 1.0).abs(), 1e-12));
    let t = [1.0, 1.0, 0.0, 0.0];
    let cases = [
        (iou(&t, &t, 0.5), 1.0),
        (iou(&[0.0, 0.0, 1.0, 1.0], &t, 0.5), 0.0),
        (iou(&[1.0, 0.0, 0.0, 0.0], &t, 0.5), 0.5),
    ];
    let ok = cases.iter().all(|(r, e)| r.as_ref().ok() == Some(e));
    out.push(Check::new("iou_identities", ok, "1, 0, 0.5".into()));
    let e = error_metrics(img.data(), img.data()).expect("nonzero truth");
    let ok = e.abs_err == 0.0 && e.rel_err == 0.0 && e.explained_var == 1.0;
    out.push(Check::new("error_metrics_perfect", ok, format!("{e:?}")));
    out
}

/// Every oracle, in a fixed order.
pub fn run_all() -> Vec<Check> {
    let mut out = Vec::new();
    for (name, report) in loss_gradient_reports(50) {
        let name: &'static str = match name {
            "pointwise_l2" => "gradient_pointwise_l2",
            "downsampled_l2" => "gradient_downsampled_l2",
            "radon_l2" => "gradient_radon_l2",
            _ => "gradient_pinn_convection",
        };
        let mut c = Check::at_most(name, report.max_rel_err(), 1e-5);
        c.detail.push_str(&format!(", {} coordinates", report.checked()));
        c.passed &= report.checked() >= 40;
        out.push(c);
    }
    out.push(Check::at_most("residual_parameter_gradient", residual_gradient_report(50, 0).max_rel_err(), 1e-4));
    let r = exact_solution_residuals(10.0, 100, 0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    out.push(Check::at_most("exact_solution_residual", r, 1e-10));
    let mut tape = Tape::new();
    let terms = crate::training::pinn_loss(&mut tape, &ExactConvection { beta: 10.0 }, &small_points(1), 10.0, PinnWeights::default())
        .expect("valid weights");
    out.push(Check::at_most("exact_solution_pinn_loss", terms.total.value(), 1e-10));
    out.push(Check::at_most("radon_linearity", radon_linearity_error(32, 12, 0), 1e-10));
    out.push(Check::at_most("radon_adjoint", radon_adjoint_error(32, 12, 0), 1e-9));
    out.push(Check::at_most("radon_mass_conservation", radon_mass_error(256, 8), 1e-6));
    out.push(Check::at_most("radon_rotational_symmetry", radon_symmetry_error(2048, 8), 1e-6));
    out.extend(metric_checks());

    let a = LearnedActivation::initial();
    let worst = [(0.0, 0.0), (1.0, 0.7), (-1.0, 0.0), (0.15, -0.1)]
        .iter()
        .map(|&(h, v)| (a.eval(h) - v).abs())
        .fold(0.0, f64::max);
    out.push(Check::at_most("activation_initial_values", worst, 1e-12));

    let mut adam = AdamState::new(1, 0.005);
    let mut p = vec![0.0];
    adam.step(&mut p, &[3.0]).expect("finite gradient");
    out.push(Check::at_most("adam_first_step", ((p[0] + 0.005) / 0.005).abs(), 1e-6));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_oracles_pass() {
        assert!(radon_linearity_error(16, 5, 1) <= 1e-10);
        assert!(radon_adjoint_error(16, 5, 1) <= 1e-9);
        assert!(exact_solution_residuals(10.0, 20, 3).iter().all(|r| r.abs() <= 1e-10));
        for c in metric_checks() {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn residual_gradient_is_second_order_correct() {
        let r = residual_gradient_report(20, 5);
        assert!(r.max_rel_err() <= 1e-4, "{:?}", r.worst());
        assert!(r.checked() >= 15);
    }
}
