#![allow(dead_code)]

use std::path::{Path, PathBuf};

use corads_cli::{cmd_synth, ExperimentConfig};
use corads_core::synth::SyntheticSpec;

pub fn toy_config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml")
}

/// Synthetic dataset of `n_scans` phantoms under `dir/data`.
pub fn synth(dir: &Path, n_scans: usize, seed: u64) -> PathBuf {
    let spec = SyntheticSpec {
        n_scans,
        seed,
        ..Default::default()
    };
    cmd_synth(&spec, &dir.join("data")).unwrap()
}

/// The shipped toy config pointed at `manifest`, writing below `dir`.
pub fn toy_config(dir: &Path, manifest: &Path, extra: &[&str]) -> ExperimentConfig {
    let mut overrides = vec![
        format!("data.manifest={}", manifest.display()),
        format!("output.runs_dir={}", dir.join("runs").display()),
        format!("output.cache_dir={}", dir.join("cache").display()),
    ];
    overrides.extend(extra.iter().map(|s| s.to_string()));
    ExperimentConfig::load(&toy_config_path(), &overrides).unwrap()
}

/// Settings that make training take a few seconds.
pub const QUICK: [&str; 4] = [
    "train.max_batches=6",
    "train.eval_every_batches=3",
    "train.batch_size=2",
    "evaluation.bootstrap.n_iter=200",
];
