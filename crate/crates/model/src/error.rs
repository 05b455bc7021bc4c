use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input geometry {geometry:?} is below the minimum {minimum:?} of the stride schedule")]
    UnsupportedGeometry {
        geometry: [usize; 3],
        minimum: [usize; 3],
    },
    #[error("input shape {got:?} does not match the model's {expected:?}")]
    GeometryMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("checkpoint tensor '{name}' has shape {checkpoint:?}, model expects {model:?}")]
    ShapeConflict {
        name: String,
        model: Vec<usize>,
        checkpoint: Vec<usize>,
    },
    #[error("checkpoint lacks tensor '{0}'")]
    MissingTensor(String),
    #[error("malformed checkpoint {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no checkpoint reader accepts {0}")]
    NoReader(PathBuf),
}
