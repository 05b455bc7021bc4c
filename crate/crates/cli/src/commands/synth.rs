use std::path::{Path, PathBuf};

use corads_core::synth::{write_dataset, SyntheticSpec};

use crate::error::Result;

/// Writes a synthetic dataset and returns its manifest path.
pub fn cmd_synth(spec: &SyntheticSpec, out_dir: &Path) -> Result<PathBuf> {
    log::info!("writing {} synthetic scans to {}", spec.n_scans, out_dir.display());
    Ok(write_dataset(spec, out_dir)?)
}
