//! Volume containers and the canonical on-disk format.
//!
//! A volume on disk is a raw little-endian buffer in (z, y, x) order next to
//! a JSON header at `<path>.json`:
//!
//! ```json
//! { "shape": [z, y, x], "spacing_mm": [z, y, x], "dtype": "float32" }
//! ```
//!
//! CT volumes are stored as `float32` Hounsfield units, masks as `uint8`.
//! Other containers plug in through [`VolumeReader`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("volume file not found: {0}")]
    Missing(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header {path}: {msg}")]
    Header { path: PathBuf, msg: String },
    #[error("{path}: expected {expected} bytes of voxel data, found {found}")]
    Size {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("no reader accepts {0}")]
    NoReader(PathBuf),
}

/// Dense 3D grid in (z, y, x) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3<T> {
    shape: [usize; 3],
    data: Vec<T>,
}

impl<T: Copy> Grid3<T> {
    pub fn filled(shape: [usize; 3], value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape[0] * shape[1] * shape[2]],
        }
    }

    pub fn from_vec(shape: [usize; 3], data: Vec<T>) -> Result<Self, VolumeError> {
        if data.len() != shape[0] * shape[1] * shape[2] {
            return Err(VolumeError::Geometry(format!(
                "{} values do not fill shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape[0] * shape[1] * shape[2]);
        for z in 0..shape[0] {
            for y in 0..shape[1] {
                for x in 0..shape[2] {
                    data.push(f(z, y, x));
                }
            }
        }
        Self { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> T {
        self.data[self.index(z, y, x)]
    }

    #[inline]
    pub fn set(&mut self, z: usize, y: usize, x: usize, v: T) {
        let i = self.index(z, y, x);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid3<U> {
        Grid3 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// One axial slice as a contiguous (y, x) buffer.
    pub fn slice(&self, z: usize) -> &[T] {
        let n = self.shape[1] * self.shape[2];
        &self.data[z * n..(z + 1) * n]
    }
}

/// CT scan in Hounsfield units.
#[derive(Debug, Clone, PartialEq)]
pub struct CtVolume {
    pub voxels: Grid3<f32>,
    pub spacing_mm: [f64; 3],
    pub scan_id: String,
}

impl CtVolume {
    pub fn new(
        scan_id: impl Into<String>,
        voxels: Grid3<f32>,
        spacing_mm: [f64; 3],
    ) -> Result<Self, VolumeError> {
        validate_geometry(voxels.shape(), spacing_mm)?;
        Ok(Self {
            voxels,
            spacing_mm,
            scan_id: scan_id.into(),
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.voxels.shape()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Lung,
    Lesion,
}

impl MaskKind {
    pub fn suffix(self) -> &'static str {
        match self {
            MaskKind::Lung => "lung",
            MaskKind::Lesion => "lesion",
        }
    }
}

/// Binary segmentation with values in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub voxels: Grid3<u8>,
    pub spacing_mm: [f64; 3],
    pub kind: MaskKind,
}

impl BinaryMask {
    pub fn new(
        kind: MaskKind,
        voxels: Grid3<u8>,
        spacing_mm: [f64; 3],
    ) -> Result<Self, VolumeError> {
        validate_geometry(voxels.shape(), spacing_mm)?;
        if voxels.data().iter().any(|&v| v > 1) {
            return Err(VolumeError::Geometry("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            voxels,
            spacing_mm,
            kind,
        })
    }

    pub fn empty_like(kind: MaskKind, volume: &CtVolume) -> Self {
        Self {
            voxels: Grid3::filled(volume.shape(), 0),
            spacing_mm: volume.spacing_mm,
            kind,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.voxels.shape()
    }

    pub fn count(&self) -> usize {
        self.voxels.data().iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.data().iter().all(|&v| v == 0)
    }

    /// True when shape and spacing equal the volume's.
    pub fn aligned_with(&self, volume: &CtVolume) -> bool {
        self.shape() == volume.shape() && self.spacing_mm == volume.spacing_mm
    }
}

fn validate_geometry(shape: [usize; 3], spacing: [f64; 3]) -> Result<(), VolumeError> {
    if shape.iter().any(|&s| s == 0) {
        return Err(VolumeError::Geometry(format!("empty grid {shape:?}")));
    }
    if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(VolumeError::Geometry(format!(
            "spacing must be positive, got {spacing:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub shape: [usize; 3],
    pub spacing_mm: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtype: Option<String>,
}

pub fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Sidecar path of an externally supplied mask: `<volume_path>.<kind>.raw`.
pub fn mask_sidecar_path(volume_path: &Path, kind: MaskKind) -> PathBuf {
    let mut s = volume_path.as_os_str().to_owned();
    s.push(format!(".{}.raw", kind.suffix()));
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> VolumeError + '_ {
    move |source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            VolumeError::Missing(path.to_path_buf())
        } else {
            VolumeError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

fn read_header(path: &Path) -> Result<VolumeHeader, VolumeError> {
    let hp = header_path(path);
    let text = fs::read_to_string(&hp).map_err(io_err(&hp))?;
    let header: VolumeHeader = serde_json::from_str(&text).map_err(|e| VolumeError::Header {
        path: hp.clone(),
        msg: e.to_string(),
    })?;
    validate_geometry(header.shape, header.spacing_mm).map_err(|e| VolumeError::Header {
        path: hp,
        msg: e.to_string(),
    })?;
    Ok(header)
}

fn read_payload(path: &Path, expected: usize) -> Result<Vec<u8>, VolumeError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != expected {
        return Err(VolumeError::Size {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes)
}

/// Reads a canonical float32 CT volume.
pub fn read_volume(path: &Path, scan_id: &str) -> Result<CtVolume, VolumeError> {
    let header = read_header(path)?;
    let n: usize = header.shape.iter().product();
    let bytes = read_payload(path, n * 4)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    CtVolume::new(scan_id, Grid3::from_vec(header.shape, data)?, header.spacing_mm)
}

/// Reads a canonical uint8 mask.
pub fn read_mask(path: &Path, kind: MaskKind) -> Result<BinaryMask, VolumeError> {
    let header = read_header(path)?;
    let n: usize = header.shape.iter().product();
    let bytes = read_payload(path, n)?;
    BinaryMask::new(kind, Grid3::from_vec(header.shape, bytes)?, header.spacing_mm)
}

pub fn write_volume(path: &Path, volume: &CtVolume) -> Result<(), VolumeError> {
    let mut bytes = Vec::with_capacity(volume.voxels.len() * 4);
    for v in volume.voxels.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_with_header(path, &bytes, volume.shape(), volume.spacing_mm, "float32")
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<(), VolumeError> {
    write_with_header(
        path,
        mask.voxels.data(),
        mask.shape(),
        mask.spacing_mm,
        "uint8",
    )
}

fn write_with_header(
    path: &Path,
    bytes: &[u8],
    shape: [usize; 3],
    spacing_mm: [f64; 3],
    dtype: &str,
) -> Result<(), VolumeError> {
    let header = VolumeHeader {
        shape,
        spacing_mm,
        dtype: Some(dtype.to_string()),
    };
    let json = serde_json::to_vec_pretty(&header).expect("header serializes");
    write_atomic(path, bytes).map_err(io_err(path))?;
    let hp = header_path(path);
    write_atomic(&hp, &json).map_err(io_err(&hp))
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Pluggable reader for volume containers other than the canonical one.
pub trait VolumeReader: Send + Sync {
    fn accepts(&self, path: &Path) -> bool;
    fn read_volume(&self, path: &Path, scan_id: &str) -> Result<CtVolume, VolumeError>;
    fn read_mask(&self, path: &Path, kind: MaskKind) -> Result<BinaryMask, VolumeError>;
}

/// The canonical raw + JSON header format.
#[derive(Debug, Default, Clone, Copy)]
pub struct RawReader;

impl VolumeReader for RawReader {
    fn accepts(&self, path: &Path) -> bool {
        header_path(path).exists()
    }

    fn read_volume(&self, path: &Path, scan_id: &str) -> Result<CtVolume, VolumeError> {
        read_volume(path, scan_id)
    }

    fn read_mask(&self, path: &Path, kind: MaskKind) -> Result<BinaryMask, VolumeError> {
        read_mask(path, kind)
    }
}

/// Dispatches to the first registered reader that accepts a path.
pub struct VolumeLoader {
    readers: Vec<Box<dyn VolumeReader>>,
}

impl Default for VolumeLoader {
    fn default() -> Self {
        Self {
            readers: vec![Box::new(RawReader)],
        }
    }
}

impl VolumeLoader {
    pub fn register(&mut self, reader: Box<dyn VolumeReader>) {
        self.readers.insert(0, reader);
    }

    fn reader_for(&self, path: &Path) -> Result<&dyn VolumeReader, VolumeError> {
        if !path.exists() {
            return Err(VolumeError::Missing(path.to_path_buf()));
        }
        self.readers
            .iter()
            .find(|r| r.accepts(path))
            .map(|r| r.as_ref())
            .ok_or_else(|| VolumeError::NoReader(path.to_path_buf()))
    }

    pub fn load_volume(&self, path: &Path, scan_id: &str) -> Result<CtVolume, VolumeError> {
        self.reader_for(path)?.read_volume(path, scan_id)
    }

    pub fn load_mask(&self, path: &Path, kind: MaskKind) -> Result<BinaryMask, VolumeError> {
        self.reader_for(path)?.read_mask(path, kind)
    }
}
