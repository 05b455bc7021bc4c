//! From a raw CT scan to the fixed-geometry network input.
//!
//! The chain is clip/normalize, resample to isotropic spacing, discard
//! slices far from the lungs and crop in-plane around the lung mask, then
//! uniformly sample a fixed number of axial slices. Masks follow the same
//! geometric transforms as the CT so every channel stays aligned.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{BinaryMask, CtVolume, Grid3, VolumeError};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("scan {0}: lung mask is empty")]
    EmptyLungMask(String),
    #[error("scan {scan}: {what} shape {got:?} does not match volume shape {want:?}")]
    MaskMismatch {
        scan: String,
        what: &'static str,
        got: [usize; 3],
        want: [usize; 3],
    },
    #[error("channel shape mismatch: CT {ct:?} vs lesion {lesion:?}")]
    ChannelMismatch { ct: [usize; 3], lesion: [usize; 3] },
    #[error("invalid target spacing {0:?}")]
    BadSpacing([f64; 3]),
    #[error("invalid preprocessing config: {0}")]
    Config(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// How the in-plane crop center is derived from the lung mask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropCenter {
    #[default]
    BoundingBox,
    Centroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub target_spacing_mm: [f64; 3],
    pub margin_mm: f64,
    pub crop_hw: [usize; 2],
    pub n_slices: usize,
    pub center: CropCenter,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            clip_lo: -1100.0,
            clip_hi: 300.0,
            target_spacing_mm: [1.5; 3],
            margin_mm: 10.0,
            crop_hw: [240, 240],
            n_slices: 128,
            center: CropCenter::BoundingBox,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.clip_lo < self.clip_hi) {
            return Err(PreprocessError::Config(format!(
                "clip_lo {} must be below clip_hi {}",
                self.clip_lo, self.clip_hi
            )));
        }
        if self.n_slices == 0 || self.crop_hw.contains(&0) {
            return Err(PreprocessError::Config(
                "n_slices and crop dimensions must be at least 1".into(),
            ));
        }
        if self.target_spacing_mm.iter().any(|&s| !(s > 0.0)) {
            return Err(PreprocessError::BadSpacing(self.target_spacing_mm));
        }
        if !(self.margin_mm >= 0.0) {
            return Err(PreprocessError::Config("margin_mm must be >= 0".into()));
        }
        Ok(())
    }

    /// Output geometry (depth, height, width).
    pub fn geometry(&self) -> [usize; 3] {
        [self.n_slices, self.crop_hw[0], self.crop_hw[1]]
    }
}

/// Network input: `channels` stacked (depth, height, width) grids in [0, 1].
/// Channel 0 is always CT; channel 1, when present, the binary lesion map.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub channels: usize,
    pub geometry: [usize; 3],
    pub data: Vec<f32>,
}

impl ModelInput {
    pub fn new(channels: usize, geometry: [usize; 3], data: Vec<f32>) -> Self {
        assert_eq!(data.len(), channels * geometry.iter().product::<usize>());
        Self {
            channels,
            geometry,
            data,
        }
    }

    pub fn voxels_per_channel(&self) -> usize {
        self.geometry.iter().product()
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.voxels_per_channel();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.voxels_per_channel();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Keeps only the first `channels` channels.
    pub fn truncate_channels(mut self, channels: usize) -> Self {
        assert!(channels >= 1 && channels <= self.channels);
        self.data.truncate(channels * self.voxels_per_channel());
        self.channels = channels;
        self
    }

    pub fn shape(&self) -> [usize; 4] {
        [
            self.channels,
            self.geometry[0],
            self.geometry[1],
            self.geometry[2],
        ]
    }
}

/// Clamps to `[clip_lo, clip_hi]` HU and maps linearly onto [0, 1].
pub fn clip_and_normalize(volume: &CtVolume, config: &PreprocessConfig) -> CtVolume {
    let (lo, hi) = (config.clip_lo, config.clip_hi);
    let range = hi - lo;
    CtVolume {
        voxels: volume
            .voxels
            .map(|v| ((f64::from(v).clamp(lo, hi) - lo) / range) as f32),
        spacing_mm: volume.spacing_mm,
        scan_id: volume.scan_id.clone(),
    }
}

/// Output extent per axis: `round(n * spacing / target)`, at least 1.
pub fn resampled_shape(shape: [usize; 3], spacing: [f64; 3], target: [f64; 3]) -> [usize; 3] {
    let mut out = [0; 3];
    for a in 0..3 {
        out[a] = ((shape[a] as f64 * spacing[a] / target[a]).round() as usize).max(1);
    }
    out
}

/// Linear interpolation weights mapping `n_out` voxel centers onto an input
/// axis of `n_in` voxels; `scale` is output spacing over input spacing.
fn axis_weights(n_in: usize, n_out: usize, scale: f64) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Trilinear resampling onto `target` spacing, done as three separable
/// 1D passes.
pub fn resample_grid(
    grid: &Grid3<f32>,
    spacing: [f64; 3],
    target: [f64; 3],
) -> Result<Grid3<f32>, PreprocessError> {
    if target.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(PreprocessError::BadSpacing(target));
    }
    if spacing.iter().any(|&s| !(s > 0.0)) || grid.is_empty() {
        return Err(PreprocessError::BadSpacing(spacing));
    }
    let [nz, ny, nx] = grid.shape();
    let [oz, oy, ox] = resampled_shape(grid.shape(), spacing, target);
    let wz = axis_weights(nz, oz, target[0] / spacing[0]);
    let wy = axis_weights(ny, oy, target[1] / spacing[1]);
    let wx = axis_weights(nx, ox, target[2] / spacing[2]);
    let lerp = |a: f32, b: f32, t: f64| -> f32 {
        if t == 0.0 {
            a
        } else {
            (f64::from(a) * (1.0 - t) + f64::from(b) * t) as f32
        }
    };

    let src = grid.data();
    // x pass: (nz, ny, ox)
    let mut gx = vec![0f32; nz * ny * ox];
    for row in 0..nz * ny {
        let s = &src[row * nx..(row + 1) * nx];
        let d = &mut gx[row * ox..(row + 1) * ox];
        for (o, &(i0, i1, t)) in d.iter_mut().zip(&wx) {
            *o = lerp(s[i0], s[i1], t);
        }
    }
    // y pass: (nz, oy, ox)
    let mut gy = vec![0f32; nz * oy * ox];
    for z in 0..nz {
        for (y, &(i0, i1, t)) in wy.iter().enumerate() {
            let r0 = (z * ny + i0) * ox;
            let r1 = (z * ny + i1) * ox;
            let d = (z * oy + y) * ox;
            for x in 0..ox {
                gy[d + x] = lerp(gx[r0 + x], gx[r1 + x], t);
            }
        }
    }
    // z pass: (oz, oy, ox)
    let plane = oy * ox;
    let mut out = vec![0f32; oz * plane];
    for (z, &(i0, i1, t)) in wz.iter().enumerate() {
        for k in 0..plane {
            out[z * plane + k] = lerp(gy[i0 * plane + k], gy[i1 * plane + k], t);
        }
    }
    Ok(Grid3::from_vec([oz, oy, ox], out)?)
}

pub fn resample_volume(volume: &CtVolume, target: [f64; 3]) -> Result<CtVolume, PreprocessError> {
    Ok(CtVolume {
        voxels: resample_grid(&volume.voxels, volume.spacing_mm, target)?,
        spacing_mm: target,
        scan_id: volume.scan_id.clone(),
    })
}

/// Masks are interpolated like intensities and thresholded at 0.5.
pub fn resample_mask(mask: &BinaryMask, target: [f64; 3]) -> Result<BinaryMask, PreprocessError> {
    let as_float = mask.voxels.map(f32::from);
    let resampled = resample_grid(&as_float, mask.spacing_mm, target)?;
    Ok(BinaryMask {
        voxels: resampled.map(|v| u8::from(v >= 0.5)),
        spacing_mm: target,
        kind: mask.kind,
    })
}

/// Slice selection and in-plane window derived from a lung mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CropWindow {
    /// Retained axial slice indices, ascending.
    pub slices: Vec<usize>,
    /// Top-left corner of the in-plane window; may lie outside the volume.
    pub origin: [isize; 2],
    pub size: [usize; 2],
}

impl CropWindow {
    pub fn from_mask(mask: &BinaryMask, config: &PreprocessConfig) -> Option<Self> {
        let [nz, ny, nx] = mask.shape();
        let mut occupied = vec![false; nz];
        let (mut ymin, mut ymax, mut xmin, mut xmax) = (usize::MAX, 0, usize::MAX, 0);
        let (mut sy, mut sx, mut count) = (0f64, 0f64, 0usize);
        for z in 0..nz {
            let slice = mask.voxels.slice(z);
            for y in 0..ny {
                for x in 0..nx {
                    if slice[y * nx + x] != 0 {
                        occupied[z] = true;
                        ymin = ymin.min(y);
                        ymax = ymax.max(y);
                        xmin = xmin.min(x);
                        xmax = xmax.max(x);
                        sy += y as f64;
                        sx += x as f64;
                        count += 1;
                    }
                }
            }
        }
        if count == 0 {
            return None;
        }
        let slices = slices_near_mask(&occupied, mask.spacing_mm[0], config.margin_mm);
        let center = match config.center {
            CropCenter::BoundingBox => [
                (ymin + ymax) as f64 / 2.0,
                (xmin + xmax) as f64 / 2.0,
            ],
            CropCenter::Centroid => [sy / count as f64, sx / count as f64],
        };
        let [h, w] = config.crop_hw;
        let origin = [
            (center[0] - h as f64 / 2.0 + 0.5).floor() as isize,
            (center[1] - w as f64 / 2.0 + 0.5).floor() as isize,
        ];
        Some(Self {
            slices,
            origin,
            size: [h, w],
        })
    }

    /// Gathers the window; out-of-bounds voxels take `pad`.
    pub fn apply<T: Copy>(&self, grid: &Grid3<T>, pad: T) -> Grid3<T> {
        let [_, ny, nx] = grid.shape();
        let [h, w] = self.size;
        let mut out = Vec::with_capacity(self.slices.len() * h * w);
        for &z in &self.slices {
            let slice = grid.slice(z);
            for yy in 0..h {
                let y = self.origin[0] + yy as isize;
                let row_ok = y >= 0 && (y as usize) < ny;
                for xx in 0..w {
                    let x = self.origin[1] + xx as isize;
                    if row_ok && x >= 0 && (x as usize) < nx {
                        out.push(slice[y as usize * nx + x as usize]);
                    } else {
                        out.push(pad);
                    }
                }
            }
        }
        Grid3::from_vec([self.slices.len(), h, w], out).expect("window fills its shape")
    }
}

/// Indices of slices whose distance to the nearest mask-bearing slice is
/// below `margin_mm`.
pub fn slices_near_mask(occupied: &[bool], spacing_z: f64, margin_mm: f64) -> Vec<usize> {
    let n = occupied.len();
    // nearest occupied slice distance (in slices) via two sweeps
    let mut dist = vec![usize::MAX; n];
    let mut last = None;
    for z in 0..n {
        if occupied[z] {
            last = Some(z);
        }
        if let Some(l) = last {
            dist[z] = z - l;
        }
    }
    last = None;
    for z in (0..n).rev() {
        if occupied[z] {
            last = Some(z);
        }
        if let Some(l) = last {
            dist[z] = dist[z].min(l - z);
        }
    }
    (0..n)
        .filter(|&z| dist[z] != usize::MAX && (dist[z] as f64) * spacing_z < margin_mm)
        .collect()
}

/// Crops a normalized volume around its lung mask. Both must already share
/// geometry. Out-of-bounds regions are padded with 0.
pub fn crop_to_lungs(
    volume: &CtVolume,
    lung_mask: &BinaryMask,
    config: &PreprocessConfig,
) -> Result<(Grid3<f32>, CropWindow), PreprocessError> {
    check_aligned(volume, lung_mask, "lung mask")?;
    let window = CropWindow::from_mask(lung_mask, config)
        .ok_or_else(|| PreprocessError::EmptyLungMask(volume.scan_id.clone()))?;
    Ok((window.apply(&volume.voxels, 0.0), window))
}

/// `round(linspace(0, n_in - 1, n_out))` with halves rounded up, computed
/// in exact integer arithmetic.
pub fn sample_indices(n_in: usize, n_out: usize) -> Vec<usize> {
    assert!(n_in >= 1 && n_out >= 1);
    if n_out == 1 {
        return vec![0];
    }
    let span = (n_in - 1) as u128;
    let steps = (n_out - 1) as u128;
    (0..n_out as u128)
        .map(|i| ((2 * i * span + steps) / (2 * steps)) as usize)
        .collect()
}

/// Picks exactly `n_slices` axial slices, repeating when the input is
/// shorter.
pub fn sample_slices<T: Copy>(grid: &Grid3<T>, n_slices: usize) -> Grid3<T> {
    let [nz, ny, nx] = grid.shape();
    let idx = sample_indices(nz, n_slices);
    let mut out = Vec::with_capacity(n_slices * ny * nx);
    for z in idx {
        out.extend_from_slice(grid.slice(z));
    }
    Grid3::from_vec([n_slices, ny, nx], out).expect("sampled grid fills its shape")
}

pub fn stack_channels(
    ct: &Grid3<f32>,
    lesion: Option<&Grid3<u8>>,
) -> Result<ModelInput, PreprocessError> {
    let geometry = ct.shape();
    let mut data = ct.data().to_vec();
    let mut channels = 1;
    if let Some(lesion) = lesion {
        if lesion.shape() != geometry {
            return Err(PreprocessError::ChannelMismatch {
                ct: geometry,
                lesion: lesion.shape(),
            });
        }
        data.extend(lesion.data().iter().map(|&v| if v != 0 { 1.0 } else { 0.0 }));
        channels = 2;
    }
    Ok(ModelInput {
        channels,
        geometry,
        data,
    })
}

fn check_aligned(
    volume: &CtVolume,
    mask: &BinaryMask,
    what: &'static str,
) -> Result<(), PreprocessError> {
    if mask.shape() != volume.shape() {
        return Err(PreprocessError::MaskMismatch {
            scan: volume.scan_id.clone(),
            what,
            got: mask.shape(),
            want: volume.shape(),
        });
    }
    Ok(())
}

/// The full chain: clip, resample, crop, sample, stack.
pub fn preprocess_scan(
    volume: &CtVolume,
    lung_mask: &BinaryMask,
    lesion_mask: Option<&BinaryMask>,
    config: &PreprocessConfig,
) -> Result<ModelInput, PreprocessError> {
    config.validate()?;
    check_aligned(volume, lung_mask, "lung mask")?;
    if let Some(lesion) = lesion_mask {
        check_aligned(volume, lesion, "lesion mask")?;
    }
    let target = config.target_spacing_mm;
    let normalized = clip_and_normalize(volume, config);
    let ct = resample_volume(&normalized, target)?;
    let lung = resample_mask(lung_mask, target)?;
    let (cropped, window) = crop_to_lungs(&ct, &lung, config)?;
    let ct_final = sample_slices(&cropped, config.n_slices);
    let lesion_final = match lesion_mask {
        Some(lesion) => {
            let resampled = resample_mask(lesion, target)?;
            Some(sample_slices(&window.apply(&resampled.voxels, 0), config.n_slices))
        }
        None => None,
    };
    stack_channels(&ct_final, lesion_final.as_ref())
}
