//! Single-model and ensemble prediction.

use corads_core::preprocess::{preprocess_scan, PreprocessConfig, PreprocessError};
use corads_core::{BinaryMask, CtVolume, ModelInput};
use corads_model::{HeadKind, ModelError, Network, NetworkOutput};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("an ensemble needs at least one member")]
    EmptyEnsemble,
    #[error("ensemble members disagree on {0}")]
    MixedMembers(&'static str),
    #[error("cannot average {0:?} and {1:?} outputs")]
    MixedHeads(HeadKind, HeadKind),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

/// Seed of ensemble member `index`.
pub fn member_seed(base_seed: u64, index: usize) -> u64 {
    base_seed + index as u64
}

pub fn predict(model: &mut Network, input: &ModelInput) -> Result<NetworkOutput, InferenceError> {
    Ok(model.forward(std::slice::from_ref(input))?.remove(0))
}

/// Arithmetic mean of outputs of one head type, accumulated incrementally
/// (`m += (x - m) / k`) so that identical outputs average to themselves
/// exactly.
pub fn mean_output(outputs: &[NetworkOutput]) -> Result<NetworkOutput, InferenceError> {
    let first = outputs.first().ok_or(InferenceError::EmptyEnsemble)?;
    if let Some(o) = outputs.iter().find(|o| o.head() != first.head()) {
        return Err(InferenceError::MixedHeads(first.head(), o.head()));
    }
    let mut mean = first.raw();
    for (k, o) in outputs.iter().enumerate().skip(1) {
        for (m, x) in mean.iter_mut().zip(o.raw()) {
            *m += (x - *m) / (k + 1) as f64;
        }
    }
    Ok(match first {
        NetworkOutput::Continuous(_) => NetworkOutput::Continuous(mean[0]),
        NetworkOutput::Categorical(_) => {
            let mut p = [0.0; 5];
            p.copy_from_slice(&mean);
            NetworkOutput::Categorical(p)
        }
    })
}

/// Independently seeded members sharing head type and input geometry.
pub struct Ensemble {
    members: Vec<Network>,
}

impl Ensemble {
    pub fn new(members: Vec<Network>) -> Result<Self, InferenceError> {
        let first = members.first().ok_or(InferenceError::EmptyEnsemble)?.config().clone();
        for m in &members[1..] {
            let c = m.config();
            if c.head != first.head {
                return Err(InferenceError::MixedMembers("head type"));
            }
            if c.input_geometry != first.input_geometry || c.input_channels != first.input_channels {
                return Err(InferenceError::MixedMembers("input geometry"));
            }
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members_mut(&mut self) -> &mut [Network] {
        &mut self.members
    }

    pub fn input_channels(&self) -> usize {
        self.members[0].config().input_channels
    }

    /// Outputs of every member, evaluated in parallel.
    pub fn member_outputs(&mut self, input: &ModelInput) -> Result<Vec<NetworkOutput>, InferenceError> {
        self.members.par_iter_mut().map(|m| predict(m, input)).collect()
    }
}

pub fn ensemble_predict(ensemble: &mut Ensemble, input: &ModelInput) -> Result<NetworkOutput, InferenceError> {
    mean_output(&ensemble.member_outputs(input)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPrediction {
    pub positive_score: f64,
    pub corads: i32,
    pub raw: NetworkOutput,
}

impl ScanPrediction {
    pub fn from_output(raw: NetworkOutput) -> Self {
        Self {
            positive_score: raw.positive_score(),
            corads: raw.corads(),
            raw,
        }
    }
}

/// Preprocesses one scan and predicts it with the ensemble. The lesion mask
/// is used only when the members take two channels.
pub fn predict_scan(
    ensemble: &mut Ensemble,
    volume: &CtVolume,
    lung_mask: &BinaryMask,
    lesion_mask: Option<&BinaryMask>,
    config: &PreprocessConfig,
) -> Result<ScanPrediction, InferenceError> {
    let lesion = if ensemble.input_channels() == 2 { lesion_mask } else { None };
    let input = preprocess_scan(volume, lung_mask, lesion, config)?;
    Ok(ScanPrediction::from_output(ensemble_predict(ensemble, &input)?))
}
