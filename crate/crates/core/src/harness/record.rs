use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{Headline, Task};
use crate::metrics::MetricReport;
use crate::models::ModelKind;

/// Outcome of one `(config, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub config_hash: String,
    pub task: Task,
    pub model: ModelKind,
    pub seed: u64,
    pub metrics: MetricReport,
    pub final_loss: f64,
    pub epochs: usize,
    pub param_count: usize,
    pub wall_seconds: f64,
    /// Run directory, relative to the config's output directory.
    pub run_dir: PathBuf,
    /// Artifact files, relative to `run_dir`. The learning curve is
    /// `curve.csv`.
    pub artifacts: Vec<PathBuf>,
    /// Task-specific side numbers, e.g. the PSNR of the noisy input.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, f64>,
}

impl ResultRecord {
    /// The value seeds are ranked by; NaN when the task metric is missing.
    pub fn headline_value(&self) -> f64 {
        let m = &self.metrics;
        match self.task.headline() {
            Headline::Psnr => m.psnr_db,
            Headline::Iou => m.iou,
            Headline::RelErr => m.rel_err,
        }
        .unwrap_or(f64::NAN)
    }
}
