//! Named-tensor archive and pretrained-weight loading.
//!
//! Archive layout: the 8-byte magic `CORADSNT`, a little-endian `u64` index
//! length, a JSON index, then the tensor payload. The index maps each tensor
//! to its shape, dtype (`f32` or `f64`) and byte offset into the payload:
//!
//! ```json
//! { "provenance": "imagenet-2d",
//!   "tensors": [ { "name": "conv1.weight", "shape": [64, 3, 7, 7], "dtype": "f32", "offset": 0 } ] }
//! ```
//!
//! Other formats plug in through [`CheckpointReader`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::inflate::inflate_kernel;
use crate::network::Network;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"CORADSNT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    shape: Vec<usize>,
    dtype: DType,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    provenance: String,
    tensors: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    /// Origin of the weights, e.g. `imagenet-2d` or `kinetics-3d`.
    pub provenance: String,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn from_network(net: &mut Network, provenance: impl Into<String>) -> Self {
        Self {
            provenance: provenance.into(),
            tensors: net.state().into_iter().collect(),
        }
    }

    pub fn to_bytes(&self, dtype: DType) -> Vec<u8> {
        let mut entries = Vec::new();
        let mut payload = Vec::new();
        for (name, t) in &self.tensors {
            entries.push(IndexEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                dtype,
                offset: payload.len(),
            });
            for &v in t.data() {
                match dtype {
                    DType::F32 => payload.extend_from_slice(&(v as f32).to_le_bytes()),
                    DType::F64 => payload.extend_from_slice(&v.to_le_bytes()),
                }
            }
        }
        let index = serde_json::to_vec(&Index {
            provenance: self.provenance.clone(),
            tensors: entries,
        })
        .expect("index serializes");
        let mut out = Vec::with_capacity(16 + index.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(index.len() as u64).to_le_bytes());
        out.extend_from_slice(&index);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, ModelError> {
        let bad = |msg: &str| ModelError::Format {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        };
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing archive magic"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let start = 16usize.checked_add(len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated index"))?;
        let index: Index = serde_json::from_slice(&bytes[16..start]).map_err(|e| bad(&e.to_string()))?;
        let payload = &bytes[start..];
        let mut tensors = BTreeMap::new();
        for e in index.tensors {
            let n: usize = e.shape.iter().product();
            let end = e
                .offset
                .checked_add(n * e.dtype.size())
                .filter(|&end| end <= payload.len())
                .ok_or_else(|| bad(&format!("tensor '{}' runs past the payload", e.name)))?;
            let raw = &payload[e.offset..end];
            let data = match e.dtype {
                DType::F32 => raw
                    .chunks_exact(4)
                    .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                    .collect(),
                DType::F64 => raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            };
            tensors.insert(e.name, Tensor::from_vec(&e.shape, data));
        }
        Ok(Self {
            provenance: index.provenance,
            tensors,
        })
    }

    /// Writes atomically; `f64` keeps weights bit-exact.
    pub fn save(&self, path: &Path, dtype: DType) -> Result<(), ModelError> {
        corads_core::volume::write_atomic(path, &self.to_bytes(dtype)).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        CheckpointLoader::default().load(path)
    }
}

pub trait CheckpointReader: Send + Sync {
    fn accepts(&self, path: &Path) -> bool;
    fn read(&self, path: &Path) -> Result<Checkpoint, ModelError>;
}

/// Reader for the native archive format.
pub struct ArchiveReader;

impl CheckpointReader for ArchiveReader {
    fn accepts(&self, path: &Path) -> bool {
        use std::io::Read;
        let mut magic = [0u8; 8];
        fs::File::open(path)
            .and_then(|mut f| f.read_exact(&mut magic))
            .map(|_| &magic == MAGIC)
            .unwrap_or(false)
    }

    fn read(&self, path: &Path) -> Result<Checkpoint, ModelError> {
        let bytes = fs::read(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Checkpoint::from_bytes(&bytes, path)
    }
}

/// Tries registered readers in order, the native format first.
pub struct CheckpointLoader {
    readers: Vec<Box<dyn CheckpointReader>>,
}

impl Default for CheckpointLoader {
    fn default() -> Self {
        Self {
            readers: vec![Box::new(ArchiveReader)],
        }
    }
}

impl CheckpointLoader {
    pub fn register(&mut self, reader: Box<dyn CheckpointReader>) {
        self.readers.push(reader);
    }

    pub fn load(&self, path: &Path) -> Result<Checkpoint, ModelError> {
        if !path.exists() {
            return Err(ModelError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::from(std::io::ErrorKind::NotFound),
            });
        }
        self.readers
            .iter()
            .find(|r| r.accepts(path))
            .ok_or_else(|| ModelError::NoReader(PathBuf::from(path)))?
            .read(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadStatus {
    Matched,
    /// 2D kernel replicated along depth.
    Inflated,
    /// Input filters adapted to a different channel count.
    ChannelAdapted,
    InflatedChannelAdapted,
    /// Left at fresh initialization (head absent or of another shape).
    Initialized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub provenance: String,
    pub entries: Vec<(String, LoadStatus)>,
    /// Checkpoint tensors the model has no use for.
    pub unused: Vec<String>,
}

impl LoadReport {
    pub fn count(&self, status: LoadStatus) -> usize {
        self.entries.iter().filter(|(_, s)| *s == status).count()
    }

    pub fn status(&self, name: &str) -> Option<LoadStatus> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }

    pub fn matched_fraction(&self) -> f64 {
        self.count(LoadStatus::Matched) as f64 / self.entries.len().max(1) as f64
    }
}

fn is_head(name: &str) -> bool {
    name.starts_with("head.")
}

/// Spreads `[out, ci, ...]` filters over `cm` input channels: existing
/// channels are kept, extra channels receive the mean input filter. When
/// the model has fewer channels every channel gets the mean.
fn adapt_channels(t: &Tensor, cm: usize) -> Tensor {
    let s = t.shape();
    let (out, ci) = (s[0], s[1]);
    let rest: usize = s[2..].iter().product();
    let mut shape = s.to_vec();
    shape[1] = cm;
    let mut data = Vec::with_capacity(out * cm * rest);
    for o in 0..out {
        let filters = &t.data()[o * ci * rest..(o + 1) * ci * rest];
        let mean: Vec<f64> = (0..rest)
            .map(|k| (0..ci).map(|j| filters[j * rest + k]).sum::<f64>() / ci as f64)
            .collect();
        for j in 0..cm {
            if cm > ci && j < ci {
                data.extend_from_slice(&filters[j * rest..(j + 1) * rest]);
            } else {
                data.extend_from_slice(&mean);
            }
        }
    }
    Tensor::from_vec(&shape, data)
}

/// Copies checkpoint weights into `net`, inflating 2D kernels and adapting
/// the first layer's input channels where needed. Head tensors that are
/// missing or differently shaped keep their fresh initialization. The model
/// is left untouched on error.
pub fn load_pretrained(net: &mut Network, checkpoint: &Checkpoint) -> Result<LoadReport, ModelError> {
    let mut plan: Vec<(String, LoadStatus, Option<Tensor>)> = Vec::new();
    let mut error = None;
    let mut first = true;
    // a 2D checkpoint counts as inflated only into a volumetric model
    let volumetric = net.config().dimensionality == crate::network::Dimensionality::D3;
    net.visit(&mut |name, p| {
        let is_first = std::mem::replace(&mut first, false);
        if error.is_some() {
            return;
        }
        let ms = p.value.shape().to_vec();
        let Some(t) = checkpoint.tensors.get(name) else {
            if is_head(name) {
                plan.push((name.to_string(), LoadStatus::Initialized, None));
            } else {
                error = Some(ModelError::MissingTensor(name.to_string()));
            }
            return;
        };
        let cs = t.shape();
        let conflict = || ModelError::ShapeConflict {
            name: name.to_string(),
            model: ms.clone(),
            checkpoint: cs.to_vec(),
        };
        if ms == cs {
            plan.push((name.to_string(), LoadStatus::Matched, Some(t.clone())));
            return;
        }
        if is_head(name) {
            plan.push((name.to_string(), LoadStatus::Initialized, None));
            return;
        }
        let (tensor, inflated) = if ms.len() == 5 && cs.len() == 4 && ms[0] == cs[0] && ms[3..] == cs[2..] {
            (inflate_kernel(t, ms[2]), volumetric)
        } else if ms.len() == cs.len() && ms.len() == 5 && ms[0] == cs[0] && ms[2..] == cs[2..] {
            (t.clone(), false)
        } else {
            error = Some(conflict());
            return;
        };
        let status = if tensor.shape()[1] == ms[1] {
            if inflated {
                LoadStatus::Inflated
            } else {
                LoadStatus::Matched
            }
        } else if is_first {
            if inflated {
                LoadStatus::InflatedChannelAdapted
            } else {
                LoadStatus::ChannelAdapted
            }
        } else {
            error = Some(conflict());
            return;
        };
        let tensor = if tensor.shape()[1] == ms[1] {
            tensor
        } else {
            adapt_channels(&tensor, ms[1])
        };
        plan.push((name.to_string(), status, Some(tensor)));
    });
    if let Some(e) = error {
        return Err(e);
    }
    let mut it = plan.iter();
    net.visit(&mut |_, p| {
        if let Some((_, _, Some(t))) = it.next() {
            p.value = t.clone();
        }
    });
    let used: BTreeSet<&str> = plan.iter().map(|(n, _, _)| n.as_str()).collect();
    Ok(LoadReport {
        provenance: checkpoint.provenance.clone(),
        unused: checkpoint
            .tensors
            .keys()
            .filter(|k| !used.contains(k.as_str()))
            .cloned()
            .collect(),
        entries: plan.into_iter().map(|(n, s, _)| (n, s)).collect(),
    })
}
