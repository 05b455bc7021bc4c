//! Agreement and diagnostic-accuracy statistics with bootstrap inference.

mod bootstrap;
mod metrics;
mod predictions;
mod report;

use thiserror::Error;

pub use bootstrap::{
    auc_ci, auc_significance, bootstrap_ci, bootstrap_significance, percentile, qwk_ci,
    qwk_significance, BootstrapConfig, Sidedness,
};
pub use metrics::{confusion_matrix, qwk, roc_auc, RocCurve, RocPoint};
pub use predictions::{format_predictions, parse_predictions, read_predictions, write_predictions, PredictionRow};
pub use report::{evaluate_run, Dichotomization, EvalReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("grade {grade} outside 1..={k}")]
    GradeOutOfRange { grade: i32, k: usize },
    #[error("kappa undefined: degenerate marginals")]
    DegenerateMarginals,
    #[error("AUC undefined: labels contain a single class")]
    SingleClass,
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("metric undefined on {failed} of {total} bootstrap draws")]
    DegenerateSample { failed: usize, total: usize },
    #[error("missing predictions for scans: {0:?}")]
    MissingPredictions(Vec<String>),
    #[error("predictions file line {line}: {msg}")]
    BadPredictions { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EvalError {
    /// Errors meaning "this sample does not define the metric", as opposed
    /// to caller mistakes.
    pub fn is_undefined(&self) -> bool {
        matches!(self, EvalError::DegenerateMarginals | EvalError::SingleClass)
    }
}
