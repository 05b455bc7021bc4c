#![allow(dead_code)]

use corads_core::preprocess::{preprocess_scan, PreprocessConfig};
use corads_core::synth::{generate_scan, SyntheticSpec};
use corads_model::{Dimensionality, HeadKind, ModelConfig};
use corads_pipeline::TrainSample;

pub const GEOMETRY: [usize; 3] = [8, 32, 32];

pub fn preprocess_config() -> PreprocessConfig {
    preprocess_config_at(GEOMETRY)
}

pub fn preprocess_config_at(geometry: [usize; 3]) -> PreprocessConfig {
    PreprocessConfig {
        target_spacing_mm: [7.5; 3],
        crop_hw: [geometry[1], geometry[2]],
        n_slices: geometry[0],
        ..Default::default()
    }
}

/// Phantoms `0..n` preprocessed to the toy geometry with the lesion channel.
pub fn samples(n: usize) -> Vec<TrainSample> {
    samples_at(n, GEOMETRY)
}

pub fn samples_at(n: usize, geometry: [usize; 3]) -> Vec<TrainSample> {
    let spec = SyntheticSpec {
        n_scans: n,
        seed: 11,
        ..Default::default()
    };
    let cfg = preprocess_config_at(geometry);
    (0..n)
        .map(|i| {
            let s = generate_scan(&spec, i);
            let input = preprocess_scan(&s.volume, &s.lung, Some(&s.lesion), &cfg).unwrap();
            TrainSample {
                scan_id: s.scan_id,
                input,
                grade: s.grade,
            }
        })
        .collect()
}

pub fn model_config(dimensionality: Dimensionality, head: HeadKind) -> ModelConfig {
    ModelConfig {
        dimensionality,
        input_channels: 2,
        head,
        pretrained: false,
        width_scale: 0.125,
        input_geometry: GEOMETRY,
    }
}
