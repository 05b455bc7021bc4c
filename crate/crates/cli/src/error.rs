use std::path::PathBuf;

use corads_core::dataset::DatasetError;
use corads_core::evaluation::EvalError;
use corads_core::lesion_provider::MaskError;
use corads_core::preprocess::PreprocessError;
use corads_core::volume::VolumeError;
use corads_model::ModelError;
use corads_pipeline::{InferenceError, TrainError};
use thiserror::Error;

/// Process exit status of each error class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Usage = 1,
    Data = 2,
    Runtime = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("scan {scan}: {source}")]
    Preprocess {
        scan: String,
        source: PreprocessError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("ensemble member {member}: {source}")]
    Member { member: usize, source: Box<CliError> },
    #[error("ablation point '{label}': {source}")]
    AblationPoint { label: String, source: Box<CliError> },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("no trained members in {0}")]
    NoMembers(PathBuf),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(vec![msg.into()])
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Config(_) | CliError::Usage(_) => ExitStatus::Usage,
            CliError::Format { .. }
            | CliError::Dataset(_)
            | CliError::Volume(_)
            | CliError::Mask(_)
            | CliError::Preprocess { .. }
            | CliError::Eval(_) => ExitStatus::Data,
            CliError::Model(e) => match e {
                ModelError::InvalidConfig(_) | ModelError::UnsupportedGeometry { .. } => ExitStatus::Usage,
                ModelError::ShapeConflict { .. }
                | ModelError::MissingTensor(_)
                | ModelError::Format { .. }
                | ModelError::NoReader(_) => ExitStatus::Data,
                _ => ExitStatus::Runtime,
            },
            CliError::Train(TrainError::Config(_)) => ExitStatus::Usage,
            CliError::Member { source, .. } | CliError::AblationPoint { source, .. } => source.status(),
            CliError::Io { .. }
            | CliError::Inference(_)
            | CliError::Train(_)
            | CliError::NoMembers(_) => ExitStatus::Runtime,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
