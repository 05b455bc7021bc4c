//! On-disk cache of preprocessed network inputs.
//!
//! Entries live under `<dir>/<key>/<scan_id>.bin`, where the key hashes the
//! preprocessing settings and mask sources. Both channels (CT and lesion)
//! are always stored; single-channel models drop the second on load, so
//! ablations over the lesion input share one cache.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use corads_core::volume::write_atomic;
use corads_core::{ModelInput, PreprocessConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::MaskOrigin;
use crate::error::{CliError, Result};

const MAGIC: &[u8; 8] = b"CORADSPC";
/// Bumped whenever the preprocessing output changes meaning.
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

impl CacheStats {
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

pub struct PreprocessCache {
    root: PathBuf,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl PreprocessCache {
    pub fn new(dir: &Path, config: &PreprocessConfig, lung: MaskOrigin, lesion: MaskOrigin) -> Self {
        Self {
            root: dir.join(cache_key(config, lung, lesion)),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    fn entry(&self, scan_id: &str) -> PathBuf {
        let safe = !scan_id.is_empty()
            && scan_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
            && !scan_id.starts_with('.');
        let name = if safe {
            scan_id.to_string()
        } else {
            hex::encode(Sha256::digest(scan_id.as_bytes()))
        };
        self.root.join(format!("{name}.bin"))
    }

    /// Returns the cached input of `scan_id`, computing and storing it on a
    /// miss. Unreadable entries count as misses and are rewritten.
    pub fn get_or_insert_with<F>(&self, scan_id: &str, compute: F) -> Result<ModelInput>
    where
        F: FnOnce() -> Result<ModelInput>,
    {
        let path = self.entry(scan_id);
        if let Ok(bytes) = fs::read(&path) {
            if let Some(input) = decode(&bytes) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(input);
            }
            log::warn!("discarding corrupt cache entry {}", path.display());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let input = compute()?;
        write_atomic(&path, &encode(&input)).map_err(|e| CliError::io(&path, e))?;
        Ok(input)
    }
}

pub fn cache_key(config: &PreprocessConfig, lung: MaskOrigin, lesion: MaskOrigin) -> String {
    let bytes = serde_json::to_vec(&(FORMAT_VERSION, config, lung, lesion)).expect("serializable");
    hex::encode(Sha256::digest(bytes))[..16].to_string()
}

fn encode(input: &ModelInput) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 4 * input.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(input.channels as u32).to_le_bytes());
    for g in input.geometry {
        out.extend_from_slice(&(g as u32).to_le_bytes());
    }
    for v in &input.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8]) -> Option<ModelInput> {
    let header = bytes.get(..24)?;
    if &header[..8] != MAGIC {
        return None;
    }
    let word = |i: usize| u32::from_le_bytes(header[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let channels = word(0);
    let geometry = [word(1), word(2), word(3)];
    let n = channels * geometry.iter().product::<usize>();
    let body = &bytes[24..];
    if body.len() != 4 * n || channels == 0 {
        return None;
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Some(ModelInput::new(channels, geometry, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input() -> ModelInput {
        ModelInput::new(2, [2, 3, 4], (0..48).map(|i| i as f32 / 47.0).collect())
    }

    #[test]
    fn codec_round_trip() {
        let x = input();
        assert_eq!(decode(&encode(&x)), Some(x));
        let mut bad = encode(&input());
        bad.pop();
        assert_eq!(decode(&bad), None);
    }

    #[test]
    fn second_lookup_hits() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PreprocessCache::new(
            dir.path(),
            &PreprocessConfig::default(),
            MaskOrigin::External,
            MaskOrigin::External,
        );
        let mut calls = 0;
        for _ in 0..3 {
            let got = cache
                .get_or_insert_with("scan/1", || {
                    calls += 1;
                    Ok(input())
                })
                .unwrap();
            assert_eq!(got, input());
        }
        assert_eq!(calls, 1);
        assert_eq!(cache.stats(), CacheStats { hits: 2, misses: 1 });
        assert!((cache.stats().hit_rate() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn key_depends_on_settings() {
        let a = PreprocessConfig::default();
        let b = PreprocessConfig {
            n_slices: 64,
            ..a.clone()
        };
        let e = MaskOrigin::External;
        assert_ne!(cache_key(&a, e, e), cache_key(&b, e, e));
        assert_ne!(cache_key(&a, e, e), cache_key(&a, e, MaskOrigin::Heuristic));
        assert_eq!(cache_key(&a, e, e), cache_key(&a.clone(), e, e));
    }
}
