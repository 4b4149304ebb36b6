//! On-disk artifacts: dataset shards, checkpoints, run configs and reports.

mod checkpoint;
mod config;
mod report;
mod shard;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::ModelError;
use crate::train_eval::EvalError;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest, TensorRecord};
pub use config::{DataSection, Preset, RunConfig, StudySection};
pub use report::{
    loss_curve_csv, metric_rows, plot_csv, read_rows_csv, study_rows_csv, write_rows_csv, ReportRow,
    REPORT_SCHEMA_VERSION,
};
pub use shard::{read_shard, tensor_bytes, write_shard, InstanceRecord, ShardFiles, ShardManifest};

/// Version shared by shard and checkpoint manifests.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: truncated at byte {offset}, expected {expected} bytes")]
    Truncated { path: PathBuf, offset: u64, expected: u64 },
    #[error("{0}")]
    Format(String),
    #[error("vocabulary hash mismatch: artifact {found}, runtime {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("config hash mismatch: artifact {found}, requested {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("format version {found}, this build reads {expected}")]
    Version { expected: u32, found: u32 },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| IoError::Format(format!("{}: {e}", path.display())))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| IoError::Format(e.to_string()))?;
    std::fs::write(path, text).map_err(io_err(path))
}

pub(crate) fn check_version(found: u32) -> Result<(), IoError> {
    if found != FORMAT_VERSION {
        return Err(IoError::Version {
            expected: FORMAT_VERSION,
            found,
        });
    }
    Ok(())
}

pub(crate) fn check_vocab(found: &str) -> Result<(), IoError> {
    let expected = crate::expr::Vocab::global().hash();
    if found != expected {
        return Err(IoError::VocabMismatch {
            expected,
            found: found.to_string(),
        });
    }
    Ok(())
}
