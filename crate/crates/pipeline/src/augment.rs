//! Training-time augmentation.
//!
//! Zoom, rotation, shear and elastic deformation act in the axial plane and
//! are shared by all slices; translation acts along all three axes. The CT
//! channel is interpolated linearly and receives additive Gaussian noise;
//! the lesion channel is resampled nearest-neighbor and stays binary.
//! Content moved in from outside the volume is 0 in both channels.

use corads_core::ModelInput;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElasticConfig {
    /// Control points per in-plane axis.
    pub grid: usize,
    /// Standard deviation of control-point displacements, in voxels.
    pub sigma: f64,
    /// Displacements are clamped to this many voxels.
    pub magnitude: f64,
}

impl Default for ElasticConfig {
    fn default() -> Self {
        Self {
            grid: 4,
            sigma: 4.0,
            magnitude: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub zoom_range: [f64; 2],
    pub rotation_deg: [f64; 2],
    pub shear_deg: [f64; 2],
    pub elastic: ElasticConfig,
    /// Per-axis range, in voxels.
    pub translation_voxels: [f64; 2],
    /// In normalized intensity units.
    pub gaussian_noise_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            zoom_range: [0.9, 1.1],
            rotation_deg: [-10.0, 10.0],
            shear_deg: [-5.0, 5.0],
            elastic: ElasticConfig::default(),
            translation_voxels: [-8.0, 8.0],
            gaussian_noise_sigma: 0.02,
        }
    }
}

impl AugmentConfig {
    /// Every magnitude zero: augmentation is the identity.
    pub fn none() -> Self {
        Self {
            zoom_range: [1.0, 1.0],
            rotation_deg: [0.0, 0.0],
            shear_deg: [0.0, 0.0],
            elastic: ElasticConfig {
                grid: 4,
                sigma: 0.0,
                magnitude: 0.0,
            },
            translation_voxels: [0.0, 0.0],
            gaussian_noise_sigma: 0.0,
        }
    }
}

fn uniform(range: [f64; 2], rng: &mut impl Rng) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

/// One sampled geometric transform, as the map from output to source
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    /// Inverse of zoom * rotation * shear, acting on (y, x) offsets from the
    /// plane center.
    pub inverse: [[f64; 2]; 2],
    /// (z, y, x) shift of the content, in voxels.
    pub translation: [f64; 3],
    /// `grid x grid` control displacements (dy, dx), row-major.
    pub elastic: Option<(usize, Vec<[f64; 2]>)>,
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            inverse: [[1.0, 0.0], [0.0, 1.0]],
            translation: [0.0; 3],
            elastic: None,
        }
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn sample(config: &AugmentConfig, rng: &mut impl Rng) -> Self {
        let zoom = uniform(config.zoom_range, rng);
        let theta = uniform(config.rotation_deg, rng).to_radians();
        let shear = uniform(config.shear_deg, rng).to_radians().tan();
        let translation = [
            uniform(config.translation_voxels, rng),
            uniform(config.translation_voxels, rng),
            uniform(config.translation_voxels, rng),
        ];
        let e = config.elastic;
        let elastic = (e.sigma > 0.0 && e.magnitude > 0.0 && e.grid >= 2).then(|| {
            let normal = Normal::new(0.0, e.sigma).expect("positive sigma");
            let points = (0..e.grid * e.grid)
                .map(|_| {
                    [
                        normal.sample(rng).clamp(-e.magnitude, e.magnitude),
                        normal.sample(rng).clamp(-e.magnitude, e.magnitude),
                    ]
                })
                .collect();
            (e.grid, points)
        });
        // forward A = zoom * R(theta) * [[1, shear], [0, 1]] on (y, x)
        let (s, c) = theta.sin_cos();
        let a = [
            [zoom * c, zoom * (c * shear - s)],
            [zoom * s, zoom * (s * shear + c)],
        ];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let inverse = if zoom == 1.0 && theta == 0.0 && shear == 0.0 {
            [[1.0, 0.0], [0.0, 1.0]]
        } else {
            [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
        };
        Self {
            inverse,
            translation,
            elastic,
        }
    }

    /// Source (y, x) of every output in-plane position.
    fn plane_map(&self, h: usize, w: usize) -> Vec<[f64; 2]> {
        let cy = (h as f64 - 1.0) / 2.0;
        let cx = (w as f64 - 1.0) / 2.0;
        let mut map = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let py = y as f64 - cy - self.translation[1];
                let px = x as f64 - cx - self.translation[2];
                let mut sy = self.inverse[0][0] * py + self.inverse[0][1] * px + cy;
                let mut sx = self.inverse[1][0] * py + self.inverse[1][1] * px + cx;
                if let Some((g, points)) = &self.elastic {
                    let d = control_displacement(*g, points, y, x, h, w);
                    sy += d[0];
                    sx += d[1];
                }
                map.push([sy, sx]);
            }
        }
        map
    }
}

/// Bilinear interpolation of the control grid spread over the plane.
fn control_displacement(g: usize, points: &[[f64; 2]], y: usize, x: usize, h: usize, w: usize) -> [f64; 2] {
    let gy = if h > 1 { y as f64 * (g - 1) as f64 / (h - 1) as f64 } else { 0.0 };
    let gx = if w > 1 { x as f64 * (g - 1) as f64 / (w - 1) as f64 } else { 0.0 };
    let (y0, x0) = ((gy.floor() as usize).min(g - 2), (gx.floor() as usize).min(g - 2));
    let (ty, tx) = (gy - y0 as f64, gx - x0 as f64);
    let p = |i: usize, j: usize| points[i * g + j];
    let mut out = [0.0; 2];
    for (k, o) in out.iter_mut().enumerate() {
        let top = p(y0, x0)[k] * (1.0 - tx) + p(y0, x0 + 1)[k] * tx;
        let bottom = p(y0 + 1, x0)[k] * (1.0 - tx) + p(y0 + 1, x0 + 1)[k] * tx;
        *o = top * (1.0 - ty) + bottom * ty;
    }
    out
}

fn at(data: &[f32], [d, h, w]: [usize; 3], z: isize, y: isize, x: isize) -> f64 {
    if z < 0 || y < 0 || x < 0 || z as usize >= d || y as usize >= h || x as usize >= w {
        0.0
    } else {
        f64::from(data[(z as usize * h + y as usize) * w + x as usize])
    }
}

fn trilinear(data: &[f32], dims: [usize; 3], s: [f64; 3]) -> f32 {
    let f = [s[0].floor(), s[1].floor(), s[2].floor()];
    let t = [s[0] - f[0], s[1] - f[1], s[2] - f[2]];
    let base = [f[0] as isize, f[1] as isize, f[2] as isize];
    let mut acc = 0.0;
    for dz in 0..2 {
        let wz = if dz == 0 { 1.0 - t[0] } else { t[0] };
        if wz == 0.0 {
            continue;
        }
        for dy in 0..2 {
            let wy = if dy == 0 { 1.0 - t[1] } else { t[1] };
            if wy == 0.0 {
                continue;
            }
            for dx in 0..2 {
                let wx = if dx == 0 { 1.0 - t[2] } else { t[2] };
                if wx == 0.0 {
                    continue;
                }
                acc += wz * wy * wx * at(data, dims, base[0] + dz, base[1] + dy, base[2] + dx);
            }
        }
    }
    acc as f32
}

fn nearest(data: &[f32], dims: [usize; 3], s: [f64; 3]) -> f32 {
    let r = |v: f64| (v + 0.5).floor() as isize;
    at(data, dims, r(s[0]), r(s[1]), r(s[2])) as f32
}

/// Applies a geometric transform to every channel.
pub fn apply_transform(input: &ModelInput, transform: &Transform) -> ModelInput {
    if transform.is_identity() {
        return input.clone();
    }
    let dims = input.geometry;
    let [d, h, w] = dims;
    let map = transform.plane_map(h, w);
    let mut out = input.clone();
    for c in 0..input.channels {
        let src = input.channel(c);
        let dst = out.channel_mut(c);
        for z in 0..d {
            let sz = z as f64 - transform.translation[0];
            for (i, &[sy, sx]) in map.iter().enumerate() {
                let s = [sz, sy, sx];
                dst[z * h * w + i] = if c == 0 {
                    trilinear(src, dims, s)
                } else {
                    nearest(src, dims, s)
                };
            }
        }
    }
    out
}

/// Random augmentation of one training input; labels are never touched.
pub fn augment(input: &ModelInput, config: &AugmentConfig, rng: &mut impl Rng) -> ModelInput {
    let transform = Transform::sample(config, rng);
    let mut out = apply_transform(input, &transform);
    if config.gaussian_noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.gaussian_noise_sigma).expect("positive sigma");
        for v in out.channel_mut(0) {
            *v = (*v + normal.sample(rng) as f32).clamp(0.0, 1.0);
        }
    }
    out
}
