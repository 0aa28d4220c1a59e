//! Experiment orchestration: task data, seed and learning-rate sweeps,
//! downsampling-scale sweeps and artifact dumps.

mod config;
mod record;
mod run;
mod task;

use thiserror::Error;

pub use config::{DataConfig, ExperimentConfig, Headline, ModelConfig, ScheduleName, Task, TrainConfig};
pub use record::ResultRecord;
pub use run::{
    dump_activation_traces, run_experiment, run_lr_sweep, run_scale_sweep, run_seed_sweep, ActivationSnapshot, Prepared,
    SweepOutcome, SweepRow, TrainedRun,
};
pub use task::{Evaluation, Reconstruction, TaskData};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{task} seed {seed}: {source}")]
    Run {
        task: Task,
        seed: u64,
        #[source]
        source: crate::training::TrainingError,
    },
    #[error(transparent)]
    Training(#[from] crate::training::TrainingError),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Operator(#[from] crate::operators::OperatorError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error(transparent)]
    Format(#[from] crate::formats::FormatError),
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
