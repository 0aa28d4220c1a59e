//! Task data, objectives and evaluation.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;

use super::{ExperimentConfig, HarnessError, Task};
use crate::autodiff::batch::LinearMap;
use crate::metrics::{error_metrics, iou, psnr, ssim, MetricError, MetricReport};
use crate::models::Model;
use crate::operators::{
    convection_exact, convection_grid, downsample_box, make_multiview, occupancy_analytic, poisson_photon_noise, procedural_image, sample_convection_points, BoxDownsample, ClipPolicy, ConvectionPoints,
    ConvectionProblem, ImageGrid, RadonOperator, Sinogram, VoxelGrid,
};
use crate::training::{FieldFit, Objective, PinnDomain, PinnObjective, PinnWeights};

/// Everything a run needs besides the model: the ground truth, what the model
/// is trained against and how.
#[derive(Debug, Clone)]
pub enum TaskData {
    /// Image fitting, super-resolution and denoising. The model is queried at
    /// `coords`; with an operator its outputs are mapped before comparison
    /// with `target`.
    Image {
        clean: ImageGrid,
        coords: Array2<f64>,
        target: Array2<f64>,
        operator: Option<Arc<dyn LinearMap>>,
        /// Degraded input shown to the model, for reference metrics.
        observed: Option<ImageGrid>,
    },
    Ct {
        phantom: ImageGrid,
        operator: Arc<RadonOperator>,
        sinogram: Sinogram,
    },
    Occupancy {
        truth: VoxelGrid,
    },
    Pinn {
        points: ConvectionPoints,
        beta: f64,
        weights: PinnWeights,
        /// Raw `(x, t)` evaluation grid.
        grid: Array2<f64>,
        exact: Vec<f64>,
    },
}

/// A model's output rendered in the task's native form.
#[derive(Debug, Clone, PartialEq)]
pub enum Reconstruction {
    Image(ImageGrid),
    Volume(VoxelGrid),
    /// Predicted and exact solution on the evaluation grid.
    Field { grid: Array2<f64>, predicted: Vec<f64>, exact: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    pub reconstruction: Reconstruction,
}

impl TaskData {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let d = &cfg.data;
        let clean = || procedural_image(d.image, d.height, d.width, d.channels, d.data_seed);
        Ok(match cfg.task {
            Task::Image => {
                let clean = clean()?;
                TaskData::Image {
                    coords: clean.coords(),
                    target: clean.values(),
                    clean,
                    operator: None,
                    observed: None,
                }
            }
            Task::Sisr => {
                let clean = clean()?;
                let low = downsample_box(&clean, d.factor)?;
                TaskData::Image {
                    coords: clean.coords(),
                    target: low.values(),
                    operator: Some(Arc::new(BoxDownsample::new(d.height, d.width, d.factor)?)),
                    clean,
                    observed: Some(low),
                }
            }
            Task::Misr => {
                let clean = clean()?;
                let set = make_multiview(
                    &clean,
                    d.views,
                    d.factor,
                    d.max_shift,
                    d.max_rotation_deg.to_radians(),
                    d.data_seed,
                )?;
                TaskData::Image {
                    coords: set.coords(),
                    target: set.values(),
                    observed: Some(set.views[0].image.clone()),
                    clean,
                    operator: None,
                }
            }
            Task::Denoise => {
                let clean = clean()?;
                let noisy = poisson_photon_noise(&clean, d.max_count, d.data_seed)?;
                TaskData::Image {
                    coords: clean.coords(),
                    target: noisy.values(),
                    clean,
                    operator: None,
                    observed: Some(noisy),
                }
            }
            Task::Ct => {
                let phantom = procedural_image(d.image, d.height, d.width, 1, d.data_seed)?;
                let angles = crate::operators::uniform_angles(d.angles);
                let operator = Arc::new(RadonOperator::new(d.height, d.width, &angles));
                let sinogram = operator.forward(&phantom)?;
                TaskData::Ct {
                    phantom,
                    operator,
                    sinogram,
                }
            }
            Task::Occupancy => TaskData::Occupancy {
                truth: occupancy_analytic(&d.shape, d.resolution)?,
            },
            Task::PinnConvection => {
                let points = sample_convection_points(&ConvectionProblem {
                    beta: d.beta,
                    n_ic: d.n_ic,
                    n_bc: d.n_bc,
                    n_col: d.n_col,
                    seed: d.data_seed,
                })?;
                let grid = convection_grid(d.eval_nx, d.eval_nt);
                let exact = grid.rows().into_iter().map(|r| convection_exact(r[0], r[1], d.beta)).collect();
                TaskData::Pinn {
                    points,
                    beta: d.beta,
                    weights: d.weights,
                    grid,
                    exact,
                }
            }
        })
    }

    pub fn objective(&self, model: &Model) -> Result<Box<dyn Objective>, HarnessError> {
        Ok(match self {
            TaskData::Image {
                coords,
                target,
                operator,
                ..
            } => match operator {
                Some(op) => Box::new(FieldFit::through(model, coords, op.clone(), target.clone())?),
                None => Box::new(FieldFit::new(model, coords, target.clone())?),
            },
            TaskData::Ct {
                phantom,
                operator,
                sinogram,
            } => {
                let target = sinogram.values.to_shape((operator.rows(), 1)).expect("contiguous").to_owned();
                Box::new(FieldFit::through(model, &phantom.coords(), operator.clone(), target)?)
            }
            TaskData::Occupancy { truth } => Box::new(FieldFit::new(model, &truth.coords(), truth.values())?),
            TaskData::Pinn {
                points, beta, weights, ..
            } => Box::new(PinnObjective::new(model, points, *beta, *weights)?),
        })
    }

    /// Model-space query points for evaluation. PDE points are already
    /// normalized.
    pub fn eval_coords(&self) -> Array2<f64> {
        match self {
            TaskData::Image { clean, .. } => clean.coords(),
            TaskData::Ct { phantom, .. } => phantom.coords(),
            TaskData::Occupancy { truth } => truth.coords(),
            TaskData::Pinn { grid, .. } => PinnDomain::normalize(grid),
        }
    }

    /// Scores predictions made at [`TaskData::eval_coords`].
    pub fn evaluate(&self, pred: &Array2<f64>) -> Result<Evaluation, HarnessError> {
        match self {
            TaskData::Image { clean, .. } => Self::score_image(clean, pred),
            TaskData::Ct { phantom, .. } => Self::score_image(phantom, pred),
            TaskData::Occupancy { truth } => {
                let values = pred.column(0).to_vec();
                let score = iou(&values, truth.data(), 0.5)?;
                let binary = values.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect();
                let report = MetricReport {
                    iou: Some(score),
                    ..Default::default()
                };
                Ok(Evaluation {
                    report,
                    reconstruction: Reconstruction::Volume(VoxelGrid::new(truth.resolution(), binary)?),
                })
            }
            TaskData::Pinn { grid, exact, .. } => {
                let predicted = pred.column(0).to_vec();
                let e = error_metrics(&predicted, exact)?;
                Ok(Evaluation {
                    report: MetricReport::with_errors(e),
                    reconstruction: Reconstruction::Field {
                        grid: grid.clone(),
                        predicted,
                        exact: exact.clone(),
                    },
                })
            }
        }
    }

    fn score_image(truth: &ImageGrid, pred: &Array2<f64>) -> Result<Evaluation, HarnessError> {
        let mut img = ImageGrid::from_values(truth.height(), truth.width(), pred)?;
        img.clip = ClipPolicy::Clamp;
        for v in img.data_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        let report = MetricReport {
            psnr_db: Some(psnr(&img, truth, 1.0)?),
            // undefined below the window size
            ssim: match ssim(&img, truth, 1.0) {
                Err(MetricError::TooSmall(..)) => None,
                r => Some(r?),
            },
            ..Default::default()
        };
        Ok(Evaluation {
            report,
            reconstruction: Reconstruction::Image(img),
        })
    }

    pub fn evaluate_model(&self, model: &Model) -> Result<Evaluation, HarnessError> {
        self.evaluate(&model.predict(&self.eval_coords())?)
    }

    /// Reference numbers that do not depend on the model.
    pub fn extras(&self) -> Result<BTreeMap<String, f64>, HarnessError> {
        let mut out = BTreeMap::new();
        if let TaskData::Image {
            clean,
            observed: Some(obs),
            ..
        } = self
        {
            let reference = if obs.shape() == clean.shape() {
                obs.clone()
            } else {
                upsample_nearest(obs, clean.height() / obs.height())
            };
            out.insert("input_psnr_db".into(), psnr(&reference, clean, 1.0)?);
        }
        Ok(out)
    }
}

fn upsample_nearest(img: &ImageGrid, k: usize) -> ImageGrid {
    let (h, w, c) = img.shape();
    let mut out = ImageGrid::filled(h * k, w * k, c, 0.0);
    for r in 0..h * k {
        for col in 0..w * k {
            for ch in 0..c {
                out.set(r, col, ch, img.get(r / k, col / k, ch));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_solution_scores_perfectly() {
        let cfg = ExperimentConfig::defaults(Task::PinnConvection);
        let data = TaskData::build(&cfg).unwrap();
        let TaskData::Pinn { grid, .. } = &data else { panic!() };
        assert_eq!(grid.nrows(), 256 * 100);
        let exact = Array2::from_shape_fn((grid.nrows(), 1), |(i, _)| {
            (grid[[i, 0]] - cfg.data.beta * grid[[i, 1]]).sin()
        });
        let e = data.evaluate(&exact).unwrap();
        assert!(e.report.rel_err.unwrap() <= 1e-6);
        assert_eq!(e.report.explained_var, Some(1.0));
    }

    #[test]
    fn perfect_image_and_volume() {
        let mut cfg = ExperimentConfig::defaults(Task::Image);
        cfg.data.height = 16;
        cfg.data.width = 16;
        let data = TaskData::build(&cfg).unwrap();
        let TaskData::Image { clean, .. } = &data else { panic!() };
        let e = data.evaluate(&clean.values()).unwrap();
        assert_eq!(e.report.psnr_db, Some(f64::INFINITY));

        let mut cfg = ExperimentConfig::defaults(Task::Occupancy);
        cfg.data.resolution = 8;
        let data = TaskData::build(&cfg).unwrap();
        let TaskData::Occupancy { truth } = &data else { panic!() };
        assert_eq!(data.evaluate(&truth.values()).unwrap().report.iou, Some(1.0));
    }

    #[test]
    fn sisr_operator_shapes() {
        let mut cfg = ExperimentConfig::defaults(Task::Sisr);
        cfg.data.height = 16;
        cfg.data.width = 16;
        let data = TaskData::build(&cfg).unwrap();
        let TaskData::Image { coords, target, operator, .. } = &data else { panic!() };
        assert_eq!(coords.nrows(), 256);
        assert_eq!(target.dim(), (16, 3));
        assert_eq!(operator.as_ref().unwrap().rows(), 16);
        assert!(data.extras().unwrap()["input_psnr_db"].is_finite());
    }

    #[test]
    fn ct_target_is_the_sinogram() {
        let mut cfg = ExperimentConfig::defaults(Task::Ct);
        cfg.data.height = 16;
        cfg.data.width = 16;
        cfg.data.angles = 6;
        let data = TaskData::build(&cfg).unwrap();
        let TaskData::Ct { phantom, operator, sinogram } = &data else { panic!() };
        assert_eq!(sinogram.values.dim(), (6, operator.bins()));
        assert_eq!(phantom.channels(), 1);
    }
}
