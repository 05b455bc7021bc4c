//! Loading manifests, splits and preprocessed inputs for a configuration.

use std::fs;
use std::path::Path;

use corads_core::dataset::{load_manifest, stratified_patient_split, to_binary};
use corads_core::lesion_provider::MaskProvider;
use corads_core::preprocess::preprocess_scan;
use corads_core::volume::VolumeLoader;
use corads_core::{LabelScheme, MaskKind, ModelInput, ScanRecord, Split, SplitAssignment};
use corads_pipeline::TrainSample;
use rayon::prelude::*;

use crate::cache::PreprocessCache;
use crate::config::{ExperimentConfig, MaskOrigin};
use crate::error::{CliError, Result};

pub fn records(config: &ExperimentConfig) -> Result<Vec<ScanRecord>> {
    Ok(load_manifest(&config.data.manifest)?)
}

pub fn split(config: &ExperimentConfig, records: &[ScanRecord]) -> Result<SplitAssignment> {
    match &config.data.split_file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Ok(SplitAssignment::from_csv(&text)?)
        }
        None => Ok(stratified_patient_split(records, config.data.split, config.data.split_seed)?),
    }
}

pub fn open_cache(config: &ExperimentConfig) -> PreprocessCache {
    PreprocessCache::new(
        &config.cache_dir(),
        &config.preprocess,
        config.data.lung_masks,
        config.data.lesion_masks,
    )
}

fn provider(origin: MaskOrigin, kind: MaskKind, record: &ScanRecord) -> MaskProvider {
    match origin {
        MaskOrigin::External => MaskProvider::external_for(kind, std::slice::from_ref(record)),
        MaskOrigin::Heuristic => MaskProvider::heuristic(kind),
    }
}

/// Loads one scan with its masks and runs the preprocessing chain.
pub fn preprocess_record(config: &ExperimentConfig, record: &ScanRecord) -> Result<ModelInput> {
    let volume = VolumeLoader::default().load_volume(&record.volume_path, &record.scan_id)?;
    let lung = provider(config.data.lung_masks, MaskKind::Lung, record).get_mask(&volume, None)?;
    let lesion = provider(config.data.lesion_masks, MaskKind::Lesion, record).get_mask(&volume, Some(&lung))?;
    preprocess_scan(&volume, &lung, Some(&lesion), &config.preprocess).map_err(|source| CliError::Preprocess {
        scan: record.scan_id.clone(),
        source,
    })
}

/// Two-channel inputs of `records`, in order, through the cache.
pub fn inputs(config: &ExperimentConfig, cache: &PreprocessCache, records: &[&ScanRecord]) -> Result<Vec<ModelInput>> {
    records
        .par_iter()
        .map(|r| cache.get_or_insert_with(&r.scan_id, || preprocess_record(config, r)))
        .collect()
}

/// Inputs cut to the channel count of the model.
pub fn model_inputs(
    config: &ExperimentConfig,
    cache: &PreprocessCache,
    records: &[&ScanRecord],
) -> Result<Vec<ModelInput>> {
    let channels = config.model.input_channels;
    Ok(inputs(config, cache, records)?
        .into_iter()
        .map(|x| x.truncate_channels(channels))
        .collect())
}

pub fn train_samples(
    config: &ExperimentConfig,
    cache: &PreprocessCache,
    records: &[&ScanRecord],
) -> Result<Vec<TrainSample>> {
    if let Some(r) = records.iter().find(|r| r.scheme() != LabelScheme::Corads) {
        return Err(CliError::Format {
            path: config.data.manifest.clone(),
            msg: format!("training needs CO-RADS labels; {} is {}", r.scan_id, r.scheme()),
        });
    }
    let inputs = model_inputs(config, cache, records)?;
    Ok(records
        .iter()
        .zip(inputs)
        .map(|(r, input)| TrainSample {
            scan_id: r.scan_id.clone(),
            input,
            grade: r.label.value(),
        })
        .collect())
}

pub fn select<'a>(records: &'a [ScanRecord], split: &SplitAssignment, which: Split) -> Vec<&'a ScanRecord> {
    split.select(records, which)
}

/// Binary truth used for ROC analysis; `None` for scans left out of it
/// (suspected iCTCF cases).
pub fn binary_truth(record: &ScanRecord) -> Option<bool> {
    if record.label.is_suspected() {
        return None;
    }
    match record.scheme() {
        LabelScheme::Binary => Some(record.label.value() == 1),
        _ => to_binary(record.label).ok().map(|b| b.value() == 1),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    corads_core::volume::write_atomic(path, text.as_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}
