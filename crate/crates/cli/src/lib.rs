//! Experiment orchestration for CO-RADS grading.
//!
//! Every subcommand of the `corads` binary is a function here: synthetic
//! data generation, cached preprocessing, ensemble training, ablation grids,
//! evaluation with figures, and multi-run reports.

pub mod cache;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod plot;
pub mod run;

pub use cache::{CacheStats, PreprocessCache};
pub use commands::ablate::{cmd_ablate, AblationAxis, AblationGrid, AblationSummary};
pub use commands::evaluate::{cmd_evaluate, EvaluateOptions, Evaluation};
pub use commands::preprocess::cmd_preprocess;
pub use commands::report::{cmd_report, runs_from_ablation, ReportRow};
pub use commands::synth::cmd_synth;
pub use commands::train::{cmd_train, TrainSummary};
pub use config::{ExperimentConfig, CACHE_DIR_ENV};
pub use error::{CliError, ExitStatus};
pub use run::{RunDir, RunMetadata};
