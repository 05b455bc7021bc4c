//! Run directories.
//!
//! ```text
//! <runs_dir>/<hash12>-s<seed>/
//!     config.toml      resolved configuration
//!     metadata.json    hash, seeds, split sizes, ablation diff
//!     split.csv        scan assignment
//!     member_00/       model.ckpt, history.json, load_report.json
//!     ...
//! ```
//!
//! A member is complete once its `history.json` exists; it is written after
//! the checkpoint, so an interrupted member is retrained from scratch.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use corads_model::{build_model, Checkpoint, ModelError, Network};
use corads_pipeline::member_seed;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::{read_json, read_text};
use crate::error::{CliError, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const METADATA_FILE: &str = "metadata.json";
pub const SPLIT_FILE: &str = "split.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.json";
pub const LOAD_REPORT_FILE: &str = "load_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationInfo {
    pub label: String,
    pub toggled: Vec<String>,
    pub base_run: String,
    /// `(path, base value, point value)` for every differing config leaf.
    pub diff: Vec<(String, String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run_id: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub member_seeds: Vec<u64>,
    pub split_sizes: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationInfo>,
}

impl RunMetadata {
    pub fn new(config: &ExperimentConfig, split_sizes: BTreeMap<String, usize>) -> Result<Self> {
        Ok(Self {
            run_id: config.run_id()?,
            config_hash: config.hash()?,
            base_seed: config.train.seed,
            member_seeds: (0..config.ensemble_size)
                .map(|i| member_seed(config.train.seed, i))
                .collect(),
            split_sizes,
            ablation: None,
        })
    }
}

pub struct RunDir {
    pub path: PathBuf,
    pub config: ExperimentConfig,
    pub metadata: RunMetadata,
}

pub fn member_dir(run: &Path, index: usize) -> PathBuf {
    run.join(format!("member_{index:02}"))
}

pub fn member_complete(run: &Path, index: usize) -> bool {
    let dir = member_dir(run, index);
    dir.join(CHECKPOINT_FILE).is_file() && dir.join(HISTORY_FILE).is_file()
}

impl RunDir {
    pub fn open(path: &Path) -> Result<Self> {
        let cfg_path = path.join(CONFIG_FILE);
        let text = read_text(&cfg_path)?;
        // stored paths are absolute, so the base directory is irrelevant
        let config = ExperimentConfig::from_toml(&text, &[], path)?;
        let metadata: RunMetadata = read_json(&path.join(METADATA_FILE))?;
        Ok(Self {
            path: path.to_path_buf(),
            config,
            metadata,
        })
    }

    /// Indices of complete members and seeds of absent ones.
    pub fn members(&self) -> (Vec<usize>, Vec<u64>) {
        let mut present = Vec::new();
        let mut absent = Vec::new();
        for (i, &seed) in self.metadata.member_seeds.iter().enumerate() {
            if member_complete(&self.path, i) {
                present.push(i);
            } else {
                absent.push(seed);
            }
        }
        (present, absent)
    }

    pub fn load_member(&self, index: usize) -> Result<Network> {
        let wrap = |source: CliError| CliError::Member {
            member: index,
            source: Box::new(source),
        };
        let mut net = build_model(&self.config.model, 0).map_err(|e| wrap(e.into()))?;
        let mut ckpt =
            Checkpoint::load(&member_dir(&self.path, index).join(CHECKPOINT_FILE)).map_err(|e| wrap(e.into()))?;
        let state = net
            .state()
            .into_iter()
            .map(|(name, _)| match ckpt.tensors.remove(&name) {
                Some(t) => Ok((name, t)),
                None => Err(wrap(ModelError::MissingTensor(name).into())),
            })
            .collect::<Result<Vec<_>>>()?;
        net.load_state(&state).map_err(|e| wrap(e.into()))?;
        Ok(net)
    }
}
