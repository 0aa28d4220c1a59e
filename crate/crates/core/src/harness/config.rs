//! Experiment configuration and per-task defaults.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::models::{EncodingSpec, ModelKind, ModelSpec};
use crate::operators::{ImageKind, Shape};
use crate::training::{PinnWeights, Schedule, ScheduleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Image,
    Occupancy,
    Sisr,
    Misr,
    Denoise,
    Ct,
    PinnConvection,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::Image,
        Task::Occupancy,
        Task::Sisr,
        Task::Misr,
        Task::Denoise,
        Task::Ct,
        Task::PinnConvection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Image => "image",
            Task::Occupancy => "occupancy",
            Task::Sisr => "sisr",
            Task::Misr => "misr",
            Task::Denoise => "denoise",
            Task::Ct => "ct",
            Task::PinnConvection => "pinn_convection",
        }
    }

    /// The metric that ranks seeds: PSNR for image-like tasks, IOU for
    /// occupancy, relative error (lower is better) for the PDE.
    pub fn headline(self) -> Headline {
        match self {
            Task::Occupancy => Headline::Iou,
            Task::PinnConvection => Headline::RelErr,
            _ => Headline::Psnr,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| HarnessError::InvalidConfig(format!("unknown task '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Headline {
    Psnr,
    Iou,
    RelErr,
}

impl Headline {
    pub fn name(self) -> &'static str {
        match self {
            Headline::Psnr => "psnr_db",
            Headline::Iou => "iou",
            Headline::RelErr => "rel_err",
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Headline::RelErr)
    }

    /// True when `a` ranks strictly above `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    Constant,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub width: usize,
    pub depth: usize,
    /// Fourier frequencies per axis for encoded models; 0 feeds raw
    /// coordinates.
    pub fourier_features: usize,
    pub fourier_scale: f64,
    pub omega0: f64,
    pub s0: f64,
    pub frequency_scale: f64,
    pub subnets_per_layer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub schedule: ScheduleName,
    /// `lr(E-1) / lr(0)` for the exponential schedule.
    pub final_fraction: f64,
    /// Task metric is logged every this many epochs; 0 disables.
    pub eval_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub image: ImageKind,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Downsampling factor for super-resolution.
    pub factor: usize,
    pub views: usize,
    /// Largest view translation, in low-resolution pixels.
    pub max_shift: f64,
    pub max_rotation_deg: f64,
    pub max_count: f64,
    pub angles: usize,
    pub resolution: usize,
    pub beta: f64,
    pub n_ic: usize,
    pub n_bc: usize,
    pub n_col: usize,
    pub eval_nx: usize,
    pub eval_nt: usize,
    /// Seeds the data (procedural image, noise, motion, PDE points);
    /// independent of the model seeds.
    pub data_seed: u64,
    pub shape: Shape,
    pub weights: PinnWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

/// `(s0, omega0)` defaults per task and model kind.
fn width_defaults(task: Task, kind: ModelKind) -> (f64, f64) {
    match (task, kind) {
        (Task::Image, ModelKind::WireReal) => (30.0, 20.0),
        (Task::Image, _) => (30.0, 30.0),
        (Task::Occupancy, _) => (40.0, 10.0),
        (Task::Sisr, _) => (6.0, 8.0),
        (Task::Misr, _) | (Task::Denoise, _) => (5.0, 5.0),
        (Task::Ct, _) | (Task::PinnConvection, _) => (10.0, 10.0),
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for `task` with a NestNet.
    pub fn defaults(task: Task) -> Self {
        Self::defaults_for(task, ModelKind::Nestnet)
    }

    pub fn defaults_for(task: Task, kind: ModelKind) -> Self {
        let (s0, omega0) = width_defaults(task, kind);
        let (epochs, lr) = match task {
            Task::Image | Task::Misr | Task::Denoise => (2000, 5e-3),
            Task::Sisr => (2000, 1e-2),
            Task::Occupancy => (200, 5e-3),
            Task::Ct => (5000, 5e-3),
            Task::PinnConvection => (8000, 5e-3),
        };
        let (image, channels) = match task {
            Task::Ct => (ImageKind::DiskScene, 1),
            _ => (ImageKind::Bandlimited, 3),
        };
        Self {
            task,
            seeds: vec![0, 1, 2, 3, 4],
            out_dir: PathBuf::from("runs"),
            model: ModelConfig {
                kind,
                width: 64,
                depth: 2,
                fourier_features: if task == Task::PinnConvection { 0 } else { 8 },
                fourier_scale: 0.5,
                omega0,
                s0,
                frequency_scale: 20.0,
                subnets_per_layer: 1,
            },
            train: TrainConfig {
                epochs,
                lr,
                // 200 full-batch steps leave no room for decay
                schedule: if task == Task::Occupancy {
                    ScheduleName::Constant
                } else {
                    ScheduleName::Exponential
                },
                final_fraction: 0.1,
                eval_every: 100,
            },
            data: DataConfig {
                image,
                height: 64,
                width: 64,
                channels,
                factor: 4,
                views: 4,
                max_shift: 0.5,
                max_rotation_deg: 2.0,
                max_count: 30.0,
                angles: 60,
                resolution: 32,
                beta: 10.0,
                n_ic: 256,
                n_bc: 100,
                n_col: 4000,
                eval_nx: 256,
                eval_nt: 100,
                data_seed: 0,
                shape: Shape::sphere(0.5),
                weights: PinnWeights::default(),
            },
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.train.epochs == 0 {
            return bad("train.epochs must be >= 1".into());
        }
        self.schedule()?;
        let d = &self.data;
        match self.task {
            Task::Image | Task::Sisr | Task::Misr | Task::Denoise | Task::Ct => {
                if d.height < 8 || d.width < 8 {
                    return bad(format!("image must be at least 8x8, got {}x{}", d.height, d.width));
                }
                if !(d.channels == 1 || d.channels == 3) {
                    return bad(format!("data.channels must be 1 or 3, got {}", d.channels));
                }
            }
            Task::Occupancy => {
                if d.resolution < 8 {
                    return bad(format!("data.resolution must be >= 8, got {}", d.resolution));
                }
            }
            Task::PinnConvection => {
                if d.eval_nx < 2 || d.eval_nt < 2 {
                    return bad("evaluation grid needs at least 2x2 points".into());
                }
                d.weights.validate()?;
            }
        }
        if matches!(self.task, Task::Sisr | Task::Misr) && (d.factor == 0 || !d.height.is_multiple_of(d.factor) || !d.width.is_multiple_of(d.factor)) {
            return bad(format!(
                "factor {} must divide the image size {}x{}",
                d.factor, d.height, d.width
            ));
        }
        if self.task == Task::Ct && d.channels != 1 {
            return bad("ct works on single-channel images".into());
        }
        if self.task == Task::Misr && d.views == 0 {
            return bad("misr needs at least one view".into());
        }
        if self.task == Task::Denoise && (d.max_count.is_nan() || d.max_count <= 0.0) {
            return bad("data.max_count must be positive".into());
        }
        if self.task == Task::Ct && d.angles == 0 {
            return bad("ct needs at least one angle".into());
        }
        let (i, o) = self.io_dims();
        self.model_spec_with(i, o).validate()?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule, HarnessError> {
        let kind = match self.train.schedule {
            ScheduleName::Constant => ScheduleKind::Constant,
            ScheduleName::Exponential => ScheduleKind::Exponential {
                final_fraction: self.train.final_fraction,
            },
        };
        Ok(Schedule::new(kind, self.train.lr, self.train.epochs)?)
    }

    /// Model input and output dimensions for the task.
    pub fn io_dims(&self) -> (usize, usize) {
        match self.task {
            Task::Image | Task::Sisr | Task::Misr | Task::Denoise => (2, self.data.channels),
            Task::Ct | Task::PinnConvection => (2, 1),
            Task::Occupancy => (3, 1),
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        let (i, o) = self.io_dims();
        self.model_spec_with(i, o)
    }

    fn model_spec_with(&self, input_dim: usize, output_dim: usize) -> ModelSpec {
        let m = &self.model;
        let mut spec = ModelSpec::new(m.kind, input_dim, output_dim, m.width, m.depth);
        if matches!(m.kind, ModelKind::Nestnet | ModelKind::Ffn) {
            spec.encoding = if m.fourier_features == 0 {
                EncodingSpec::identity()
            } else {
                EncodingSpec::fourier(m.fourier_features).with_scale(m.fourier_scale)
            };
        }
        spec.omega0 = m.omega0;
        spec.s0 = m.s0;
        spec.frequency_scale = m.frequency_scale;
        spec.subnets_per_layer = m.subnets_per_layer;
        spec
    }

    /// Short hex digest of every semantic field. Seeds and the output
    /// directory do not change what a run computes, so they are excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("seeds");
            map.remove("out_dir");
        }
        // serde_json maps are ordered by key, so the text is canonical.
        let text = serde_json::to_string(&v).expect("value serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Directory name for this configuration's runs.
    pub fn run_name(&self) -> String {
        format!("{}-{}-{}", self.task, self.model.kind, self.hash())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_for_every_task_and_kind() {
        for task in Task::ALL {
            for kind in ModelKind::ALL {
                let c = ExperimentConfig::defaults_for(task, kind);
                c.validate().unwrap_or_else(|e| panic!("{task} {kind}: {e}"));
            }
        }
    }

    #[test]
    fn hash_ignores_seeds_and_out_dir() {
        let a = ExperimentConfig::defaults(Task::Image);
        let mut b = a.clone();
        b.seeds = vec![9];
        b.out_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.train.lr = 1e-3;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.data.shape = Shape::torus();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn factor_must_divide() {
        let mut c = ExperimentConfig::defaults(Task::Sisr);
        c.data.factor = 5;
        assert!(c.validate().is_err());
        c.data.factor = 1;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn headline_ordering() {
        assert!(Task::Image.headline().better(30.0, 29.0));
        assert!(Task::PinnConvection.headline().better(0.1, 0.2));
        assert!(!Task::Occupancy.headline().better(0.9, 0.9));
        assert_eq!("pinn_convection".parse::<Task>().unwrap(), Task::PinnConvection);
    }

    #[test]
    fn pinn_defaults_feed_raw_coordinates() {
        let c = ExperimentConfig::defaults(Task::PinnConvection);
        assert_eq!(c.model_spec().encoding, EncodingSpec::identity());
        let i = ExperimentConfig::defaults(Task::Image).model_spec();
        assert_eq!(i.encoding.num_frequencies(), 8);
        assert_eq!(i.output_dim, 3);
    }
}
