use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use corads_core::Split;
use corads_model::{build_model, load_pretrained, Checkpoint, CheckpointLoader, DType};
use corads_pipeline::{init_seed, member_seed, train, TrainConfig, TrainSample};
use serde::{Deserialize, Serialize};

use crate::cache::{CacheStats, PreprocessCache};
use crate::config::ExperimentConfig;
use crate::data::{self, read_json, write_json, write_text};
use crate::error::{CliError, Result};
use crate::run::{
    member_complete, member_dir, AblationInfo, RunMetadata, CHECKPOINT_FILE, CONFIG_FILE, HISTORY_FILE,
    LOAD_REPORT_FILE, METADATA_FILE, SPLIT_FILE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub run_id: String,
    pub trained: Vec<usize>,
    /// Members already complete from an earlier invocation.
    pub skipped: Vec<usize>,
    pub cache: CacheStats,
}

/// Trains every missing ensemble member of the run described by `config`.
pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainSummary> {
    let cache = data::open_cache(config);
    train_run(config, &cache, None)
}

pub(crate) fn train_run(
    config: &ExperimentConfig,
    cache: &PreprocessCache,
    ablation: Option<AblationInfo>,
) -> Result<TrainSummary> {
    config.validate()?;
    let before = cache.stats();
    let records = data::records(config)?;
    let split = data::split(config, &records)?;
    let sizes: BTreeMap<String, usize> = Split::ALL
        .iter()
        .map(|&s| (s.as_str().to_string(), split.select(&records, s).len()))
        .collect();
    let mut metadata = RunMetadata::new(config, sizes)?;
    metadata.ablation = ablation;
    let run_dir = config.output.runs_dir.join(&metadata.run_id);
    let meta_path = run_dir.join(METADATA_FILE);
    if meta_path.exists() {
        let existing: RunMetadata = read_json(&meta_path)?;
        if existing.config_hash != metadata.config_hash {
            return Err(CliError::Format {
                path: meta_path,
                msg: "run directory belongs to a different configuration".into(),
            });
        }
        if metadata.ablation.is_none() {
            metadata.ablation = existing.ablation;
        }
    }
    write_text(&run_dir.join(CONFIG_FILE), &config.to_toml())?;
    write_json(&meta_path, &metadata)?;
    write_text(&run_dir.join(SPLIT_FILE), &split.to_csv())?;

    let (skipped, pending): (Vec<usize>, Vec<usize>) =
        (0..config.ensemble_size).partition(|&i| member_complete(&run_dir, i));
    if !skipped.is_empty() {
        log::info!("{}: members {skipped:?} already trained", metadata.run_id);
    }
    if !pending.is_empty() {
        let train_records = split.select(&records, Split::Train);
        let val_records = split.select(&records, Split::Validation);
        if train_records.is_empty() || val_records.is_empty() {
            return Err(CliError::config("data.split: training and validation splits must be non-empty"));
        }
        let train_set = data::train_samples(config, cache, &train_records)?;
        let val_set = data::train_samples(config, cache, &val_records)?;
        let pretrained = match (&config.data.pretrained_checkpoint, config.model.pretrained) {
            (Some(path), true) => Some(CheckpointLoader::default().load(path)?),
            _ => None,
        };
        for &i in &pending {
            train_member(config, &run_dir, &metadata.run_id, i, &train_set, &val_set, pretrained.as_ref())
                .map_err(|e| CliError::Member {
                    member: i,
                    source: Box::new(e),
                })?;
        }
    }
    let after = cache.stats();
    Ok(TrainSummary {
        run_dir,
        run_id: metadata.run_id,
        trained: pending,
        skipped,
        cache: CacheStats {
            hits: after.hits - before.hits,
            misses: after.misses - before.misses,
        },
    })
}

fn train_member(
    config: &ExperimentConfig,
    run_dir: &Path,
    run_id: &str,
    index: usize,
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    pretrained: Option<&Checkpoint>,
) -> Result<()> {
    let seed = member_seed(config.train.seed, index);
    let dir = member_dir(run_dir, index);
    let mut net = build_model(&config.model, init_seed(seed))?;
    if let Some(ckpt) = pretrained {
        let report = load_pretrained(&mut net, ckpt)?;
        log::info!(
            "member {index}: {:.1}% of tensors matched from '{}'",
            100.0 * report.matched_fraction(),
            report.provenance
        );
        write_json(&dir.join(LOAD_REPORT_FILE), &report)?;
    }
    let tc = TrainConfig {
        seed,
        ..config.train.clone()
    };
    log::info!(
        "member {index} (seed {seed}): {} training and {} validation scans",
        train_set.len(),
        val_set.len()
    );
    let outcome = train(&mut net, train_set, val_set, &tc)?;
    Checkpoint {
        provenance: format!("{run_id}/member_{index:02}"),
        tensors: outcome.best_state.into_iter().collect(),
    }
    .save(&dir.join(CHECKPOINT_FILE), DType::F64)?;
    write_json(&dir.join(HISTORY_FILE), &outcome.history)
}
