//! Experiment configuration: one TOML file with `data`, `preprocess`,
//! `model`, `train`, `evaluation` and `output` tables.
//!
//! Values can be overridden from the command line with dotted
//! `key.path=value` assignments. Relative paths are resolved against the
//! directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use corads_core::dataset::SplitFractions;
use corads_core::evaluation::BootstrapConfig;
use corads_core::PreprocessConfig;
use corads_model::ModelConfig;
use corads_pipeline::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Environment variable overriding the preprocessing cache directory.
pub const CACHE_DIR_ENV: &str = "CORADS_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskOrigin {
    /// Mask files from an external segmentation model (manifest column or
    /// `<volume>.<kind>.raw` sidecar).
    External,
    /// HU-threshold stand-in computed on the fly.
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub manifest: PathBuf,
    /// Fixed assignment (`scan_id,split`); overrides `split` when present.
    pub split_file: Option<PathBuf>,
    pub split: SplitFractions,
    pub split_seed: u64,
    pub lung_masks: MaskOrigin,
    pub lesion_masks: MaskOrigin,
    /// Required when `model.pretrained` is set.
    pub pretrained_checkpoint: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::new(),
            split_file: None,
            split: SplitFractions::default(),
            split_seed: 0,
            lung_masks: MaskOrigin::External,
            lesion_masks: MaskOrigin::External,
            pretrained_checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub bootstrap: BootstrapConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub runs_dir: PathBuf,
    /// Defaults to `<runs_dir>/cache`; the environment variable wins.
    pub cache_dir: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            runs_dir: PathBuf::from("runs"),
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ensemble_size: usize,
    pub data: DataConfig,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub evaluation: EvaluationConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 10,
            data: DataConfig::default(),
            preprocess: PreprocessConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            evaluation: EvaluationConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads, overrides, resolves and validates a config file.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, overrides, base)
    }

    pub fn from_toml(text: &str, overrides: &[String], base: &Path) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::config(format!("TOML syntax: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(e.message().to_string()))?;
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.manifest);
        self.data.split_file.iter_mut().for_each(fix);
        self.data.pretrained_checkpoint.iter_mut().for_each(fix);
        fix(&mut self.output.runs_dir);
        self.output.cache_dir.iter_mut().for_each(fix);
    }

    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.ensemble_size == 0 {
            problems.push("ensemble_size: must be at least 1".to_string());
        }
        if self.data.manifest.as_os_str().is_empty() {
            problems.push("data.manifest: required".to_string());
        }
        if self.data.split_file.is_none() {
            let f = self.data.split;
            let parts = [f.train, f.validation, f.test];
            if parts.iter().any(|v| !(*v >= 0.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                problems.push("data.split: fractions must be non-negative and sum to 1".to_string());
            }
            if !(f.train > 0.0 && f.validation > 0.0) {
                problems.push("data.split: train and validation fractions must be positive".to_string());
            }
        }
        if let Err(e) = self.preprocess.validate() {
            problems.push(format!("preprocess: {e}"));
        }
        if let Err(e) = self.model.validate() {
            problems.push(format!("model: {e}"));
        }
        if let Err(e) = self.train.validate() {
            problems.push(format!("train: {e}"));
        }
        if self.model.input_geometry != self.preprocess.geometry() {
            problems.push(format!(
                "model.input_geometry: {:?} differs from the preprocessing output {:?}",
                self.model.input_geometry,
                self.preprocess.geometry()
            ));
        }
        if self.model.pretrained && self.data.pretrained_checkpoint.is_none() {
            problems.push("data.pretrained_checkpoint: required when model.pretrained is set".to_string());
        }
        if self.evaluation.bootstrap.n_iter == 0 {
            problems.push("evaluation.bootstrap.n_iter: must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems))
        }
    }

    /// Identity of the experiment: everything that influences the trained
    /// members except the base seed. Files are identified by content, output
    /// locations and evaluation settings are ignored.
    pub fn hash(&self) -> Result<String> {
        let mut view = self.clone();
        view.train.seed = 0;
        view.output = OutputConfig::default();
        view.evaluation = EvaluationConfig::default();
        let digests = [
            Some(file_digest(&self.data.manifest)?),
            self.data.split_file.as_deref().map(file_digest).transpose()?,
            self.data.pretrained_checkpoint.as_deref().map(file_digest).transpose()?,
        ];
        view.data.manifest = PathBuf::new();
        view.data.split_file = None;
        view.data.pretrained_checkpoint = None;
        let bytes = serde_json::to_vec(&(view, digests)).expect("config serializes");
        Ok(hex::encode(Sha256::digest(bytes)))
    }

    /// Directory name of a run: short hash plus base seed.
    pub fn run_id(&self) -> Result<String> {
        Ok(format!("{}-s{}", &self.hash()?[..12], self.train.seed))
    }

    pub fn cache_dir(&self) -> PathBuf {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self
                .output
                .cache_dir
                .clone()
                .unwrap_or_else(|| self.output.runs_dir.join("cache")),
        }
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Applies `a.b.c=value`. The value is parsed as a TOML literal and taken as
/// a plain string when that fails.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{assignment}' is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("override key '{key}' is malformed")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override '{key}': '{part}' is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Leaf-level differences between two configs as `(path, left, right)`.
pub fn config_diff(a: &ExperimentConfig, b: &ExperimentConfig) -> Vec<(String, String, String)> {
    let va = serde_json::to_value(a).expect("config serializes");
    let vb = serde_json::to_value(b).expect("config serializes");
    let mut out = Vec::new();
    diff_values("", &va, &vb, &mut out);
    out
}

fn diff_values(path: &str, a: &serde_json::Value, b: &serde_json::Value, out: &mut Vec<(String, String, String)>) {
    use serde_json::Value;
    match (a, b) {
        (Value::Object(ma), Value::Object(mb)) => {
            let keys: std::collections::BTreeSet<&String> = ma.keys().chain(mb.keys()).collect();
            for k in keys {
                let child = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                diff_values(&child, ma.get(k).unwrap_or(&Value::Null), mb.get(k).unwrap_or(&Value::Null), out);
            }
        }
        _ if a != b => out.push((path.to_string(), a.to_string(), b.to_string())),
        _ => {}
    }
}
