//! Lung and lesion mask providers.
//!
//! Masks come either from files produced by an external segmentation model
//! or from simple HU-threshold heuristics that keep the pipeline runnable
//! without one.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dataset::ScanRecord;
use crate::volume::{mask_sidecar_path, BinaryMask, CtVolume, Grid3, MaskKind, VolumeError, VolumeLoader};

/// Open HU window of aerated lung parenchyma.
pub const LUNG_HU: (f32, f32) = (-1000.0, -400.0);
/// Closed HU window spanning ground-glass opacity to consolidation.
pub const LESION_HU: (f32, f32) = (-700.0, 100.0);
/// Smallest lesion component kept, in voxels.
pub const MIN_LESION_VOXELS: usize = 5;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("no {kind:?} mask registered for scan {scan}")]
    NotRegistered { scan: String, kind: MaskKind },
    #[error("{kind:?} mask file missing for scan {scan}: {path}")]
    MissingFile {
        scan: String,
        kind: MaskKind,
        path: PathBuf,
    },
    #[error("{kind:?} mask for scan {scan} has shape {got:?}, volume has {want:?}")]
    ShapeMismatch {
        scan: String,
        kind: MaskKind,
        got: [usize; 3],
        want: [usize; 3],
    },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone)]
pub enum MaskSource {
    /// scan_id -> mask file
    ExternalFile(HashMap<String, PathBuf>),
    Heuristic,
}

#[derive(Debug, Clone)]
pub struct MaskProvider {
    pub kind: MaskKind,
    pub source: MaskSource,
}

impl MaskProvider {
    pub fn heuristic(kind: MaskKind) -> Self {
        Self {
            kind,
            source: MaskSource::Heuristic,
        }
    }

    /// Registers masks from the manifest column when present, otherwise from
    /// the `<volume_path>.<kind>.raw` sidecar convention.
    pub fn external_for(kind: MaskKind, records: &[ScanRecord]) -> Self {
        let registry = records
            .iter()
            .map(|r| {
                let column = match kind {
                    MaskKind::Lung => r.lung_mask_path.clone(),
                    MaskKind::Lesion => r.lesion_mask_path.clone(),
                };
                let path = column.unwrap_or_else(|| mask_sidecar_path(&r.volume_path, kind));
                (r.scan_id.clone(), path)
            })
            .collect();
        Self {
            kind,
            source: MaskSource::ExternalFile(registry),
        }
    }

    /// Produces a mask aligned with `volume`. Heuristic lesion masks are
    /// gated by `lung_mask`, computed heuristically when not given.
    pub fn get_mask(
        &self,
        volume: &CtVolume,
        lung_mask: Option<&BinaryMask>,
    ) -> Result<BinaryMask, MaskError> {
        match &self.source {
            MaskSource::ExternalFile(registry) => {
                let path = registry
                    .get(&volume.scan_id)
                    .ok_or_else(|| MaskError::NotRegistered {
                        scan: volume.scan_id.clone(),
                        kind: self.kind,
                    })?;
                load_external(path, self.kind, volume)
            }
            MaskSource::Heuristic => Ok(match self.kind {
                MaskKind::Lung => heuristic_lung(volume),
                MaskKind::Lesion => match lung_mask {
                    Some(lung) => heuristic_lesion(volume, lung),
                    None => heuristic_lesion(volume, &heuristic_lung(volume)),
                },
            }),
        }
    }
}

fn load_external(path: &Path, kind: MaskKind, volume: &CtVolume) -> Result<BinaryMask, MaskError> {
    if !path.exists() {
        return Err(MaskError::MissingFile {
            scan: volume.scan_id.clone(),
            kind,
            path: path.to_path_buf(),
        });
    }
    let mut mask = VolumeLoader::default().load_mask(path, kind)?;
    if mask.shape() != volume.shape() {
        return Err(MaskError::ShapeMismatch {
            scan: volume.scan_id.clone(),
            kind,
            got: mask.shape(),
            want: volume.shape(),
        });
    }
    // spacing is taken from the volume; headers may round it differently
    mask.spacing_mm = volume.spacing_mm;
    Ok(mask)
}

/// Lung stand-in: air-density components that do not touch the in-plane
/// border, two largest kept, then closed.
pub fn heuristic_lung(volume: &CtVolume) -> BinaryMask {
    let shape = volume.shape();
    let candidate = volume
        .voxels
        .map(|v| u8::from(v > LUNG_HU.0 && v < LUNG_HU.1));
    let (labels, sizes) = label_components(&candidate);
    let [nz, ny, nx] = shape;
    let mut touches = vec![false; sizes.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if y == 0 || x == 0 || y == ny - 1 || x == nx - 1 {
                    let l = labels.get(z, y, x);
                    if l > 0 {
                        touches[l as usize - 1] = true;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..sizes.len()).filter(|&i| !touches[i]).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let keep: Vec<u32> = order.iter().take(2).map(|&i| i as u32 + 1).collect();
    let selected = labels.map(|l| u8::from(l > 0 && keep.contains(&l)));
    BinaryMask {
        voxels: erode(&dilate(&selected)),
        spacing_mm: volume.spacing_mm,
        kind: MaskKind::Lung,
    }
}

/// Lesion stand-in: voxels inside the lung with HU in the GGO to
/// consolidation window, in components of at least five voxels.
pub fn heuristic_lesion(volume: &CtVolume, lung_mask: &BinaryMask) -> BinaryMask {
    let candidate = Grid3::from_vec(
        volume.shape(),
        volume
            .voxels
            .data()
            .iter()
            .zip(lung_mask.voxels.data())
            .map(|(&v, &m)| u8::from(m != 0 && v >= LESION_HU.0 && v <= LESION_HU.1))
            .collect(),
    )
    .expect("lung mask aligned with volume");
    let (labels, sizes) = label_components(&candidate);
    BinaryMask {
        voxels: labels.map(|l| u8::from(l > 0 && sizes[l as usize - 1] >= MIN_LESION_VOXELS)),
        spacing_mm: volume.spacing_mm,
        kind: MaskKind::Lesion,
    }
}

const NEIGHBORS: [[isize; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

#[inline]
fn neighbor(shape: [usize; 3], p: [usize; 3], d: [isize; 3]) -> Option<[usize; 3]> {
    let mut q = [0; 3];
    for a in 0..3 {
        let v = p[a] as isize + d[a];
        if v < 0 || v >= shape[a] as isize {
            return None;
        }
        q[a] = v as usize;
    }
    Some(q)
}

/// 6-connected component labels (1-based, 0 = background) and sizes.
fn label_components(mask: &Grid3<u8>) -> (Grid3<u32>, Vec<usize>) {
    let shape = mask.shape();
    let mut labels = Grid3::filled(shape, 0u32);
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for z in 0..shape[0] {
        for y in 0..shape[1] {
            for x in 0..shape[2] {
                if mask.get(z, y, x) == 0 || labels.get(z, y, x) != 0 {
                    continue;
                }
                let label = sizes.len() as u32 + 1;
                let mut size = 0;
                labels.set(z, y, x, label);
                stack.push([z, y, x]);
                while let Some(p) = stack.pop() {
                    size += 1;
                    for d in NEIGHBORS {
                        if let Some(q) = neighbor(shape, p, d) {
                            if mask.get(q[0], q[1], q[2]) != 0 && labels.get(q[0], q[1], q[2]) == 0 {
                                labels.set(q[0], q[1], q[2], label);
                                stack.push(q);
                            }
                        }
                    }
                }
                sizes.push(size);
            }
        }
    }
    (labels, sizes)
}

fn dilate(mask: &Grid3<u8>) -> Grid3<u8> {
    let shape = mask.shape();
    Grid3::from_fn(shape, |z, y, x| {
        let p = [z, y, x];
        u8::from(
            mask.get(z, y, x) != 0
                || NEIGHBORS.iter().any(|&d| {
                    neighbor(shape, p, d).is_some_and(|q| mask.get(q[0], q[1], q[2]) != 0)
                }),
        )
    })
}

fn erode(mask: &Grid3<u8>) -> Grid3<u8> {
    let shape = mask.shape();
    Grid3::from_fn(shape, |z, y, x| {
        let p = [z, y, x];
        u8::from(
            mask.get(z, y, x) != 0
                && NEIGHBORS.iter().all(|&d| {
                    neighbor(shape, p, d).is_none_or(|q| mask.get(q[0], q[1], q[2]) != 0)
                }),
        )
    })
}
