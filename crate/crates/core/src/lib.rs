//! Core building blocks for automated CO-RADS grading of chest CT.
//!
//! This crate holds everything that does not involve a neural network:
//! manifests and splits, volume containers, the preprocessing chain that
//! turns a CT scan into a fixed-geometry network input, lung and lesion
//! mask providers, the ordinal grade mapping, evaluation statistics and a
//! synthetic phantom generator for desk-scale experiments.

pub mod dataset;
pub mod evaluation;
pub mod lesion_provider;
pub mod ordinal;
pub mod preprocess;
pub mod synth;
pub mod volume;

pub use dataset::{GradeLabel, LabelScheme, ScanRecord, Split, SplitAssignment};
pub use preprocess::{ModelInput, PreprocessConfig};
pub use volume::{BinaryMask, CtVolume, Grid3, MaskKind};
