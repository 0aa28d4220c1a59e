//! On-disk artifacts: PGM/PPM images, the experiment config file, JSON-lines
//! result records, model checkpoints and CSV tables.

mod checkpoint;
mod config;
mod pnm;
mod results;
mod tables;

use std::path::PathBuf;

use thiserror::Error;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{apply_override, parse_config, parse_config_with, read_config, serialize_config};
pub use pnm::{decode_pnm, encode_pnm, read_image, write_image};
pub use results::{append_result, read_results, read_results_from, write_results};
pub use tables::{write_curve, write_table, write_voxels, Table};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed image header at byte {offset}: {msg}")]
    Header { offset: usize, msg: String },
    #[error("truncated image payload: file ends at byte {offset}, expected {expected} bytes")]
    Truncated { offset: usize, expected: usize },
    #[error("unsupported image: {0}")]
    Unsupported(String),
    #[error("config line {line}, column {column}: {msg}")]
    Config { line: usize, column: usize, msg: String },
    #[error("config: {0}")]
    ConfigValue(String),
    #[error("results line {line}: {msg}")]
    ResultLine { line: usize, msg: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl FormatError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.into(),
            source,
        }
    }
}
