//! Synthetic chest-CT phantoms with grade-dependent lesion load.
//!
//! Each phantom is a tissue-density body with two air-density lung
//! ellipsoids. Ground-glass blobs are implanted inside the lungs; their
//! count and radius grow with the assigned CO-RADS grade, so the expected
//! lesion volume is strictly increasing in the grade.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{format_manifest, GradeLabel, ScanRecord};
use crate::volume::{
    mask_sidecar_path, write_atomic, write_mask, write_volume, BinaryMask, CtVolume, Grid3, MaskKind,
    VolumeError,
};

pub const AIR_HU: f32 = -1000.0;
pub const TISSUE_HU: f32 = 40.0;
pub const LUNG_HU: f32 = -850.0;
pub const GGO_HU: f32 = -550.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_scans: usize,
    /// (z, y, x) voxels.
    pub shape: [usize; 3],
    pub spacing_mm: [f64; 3],
    /// Lung semi-axes in mm (z, y, x), before per-scan jitter.
    pub lung_radii_mm: [f64; 3],
    /// Lateral distance of each lung center from the midline, in mm.
    pub lung_offset_mm: f64,
    /// Relative per-scan jitter of lung size and position.
    pub jitter: f64,
    /// Number of blobs for grades 1..=5; must be non-decreasing.
    pub lesion_count: [usize; 5],
    /// Blob radius range in mm for grades 1..=5.
    pub lesion_radius_mm: [(f64, f64); 5],
    pub noise_hu: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_scans: 20,
            shape: [40, 64, 64],
            spacing_mm: [5.0, 5.0, 5.0],
            lung_radii_mm: [75.0, 95.0, 55.0],
            lung_offset_mm: 65.0,
            jitter: 0.08,
            lesion_count: [0, 1, 3, 5, 8],
            lesion_radius_mm: [
                (0.0, 0.0),
                (9.0, 13.0),
                (10.0, 15.0),
                (12.0, 17.0),
                (14.0, 20.0),
            ],
            noise_hu: 15.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Analytic mean lesion volume (mm^3) of a grade, ignoring overlap and
    /// clipping at the lung boundary.
    pub fn expected_lesion_volume(&self, grade: i32) -> f64 {
        let g = (grade - 1) as usize;
        let (lo, hi) = self.lesion_radius_mm[g];
        // E[r^3] for r ~ U(lo, hi)
        let mean_r3 = if hi > lo {
            (hi.powi(4) - lo.powi(4)) / (4.0 * (hi - lo))
        } else {
            lo.powi(3)
        };
        self.lesion_count[g] as f64 * 4.0 / 3.0 * std::f64::consts::PI * mean_r3
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    /// Center in voxel coordinates (z, y, x).
    pub center: [f64; 3],
    /// Semi-axes in voxels.
    pub radii: [f64; 3],
}

impl Ellipsoid {
    pub fn contains(&self, z: usize, y: usize, x: usize) -> bool {
        let p = [z as f64, y as f64, x as f64];
        (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.radii[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }
}

pub struct SyntheticScan {
    pub scan_id: String,
    pub grade: i32,
    pub volume: CtVolume,
    pub lung: BinaryMask,
    pub lesion: BinaryMask,
    pub lungs: [Ellipsoid; 2],
    pub blobs: Vec<Ellipsoid>,
}

/// Grade of scan `index`: round-robin over 1..=5.
pub fn grade_of(index: usize) -> i32 {
    (index % 5) as i32 + 1
}

pub fn scan_id(index: usize) -> String {
    format!("syn{index:04}")
}

/// Builds phantom `index`. Each scan draws from its own random stream, so a
/// phantom does not depend on how many others are generated.
pub fn generate_scan(spec: &SyntheticSpec, index: usize) -> SyntheticScan {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let grade = grade_of(index);
    let [nz, ny, nx] = spec.shape;
    let sp = spec.spacing_mm;
    let mid = [
        (nz as f64 - 1.0) / 2.0,
        (ny as f64 - 1.0) / 2.0,
        (nx as f64 - 1.0) / 2.0,
    ];
    let mut jitter = |scale: f64| 1.0 + spec.jitter * scale * (2.0 * rng.random::<f64>() - 1.0);

    let shift = [
        (jitter(1.0) - 1.0) * spec.lung_radii_mm[0] / sp[0],
        (jitter(1.0) - 1.0) * spec.lung_radii_mm[1] / sp[1],
        (jitter(1.0) - 1.0) * spec.lung_radii_mm[2] / sp[2],
    ];
    let mut lungs = [Ellipsoid {
        center: [0.0; 3],
        radii: [0.0; 3],
    }; 2];
    for (side, lung) in lungs.iter_mut().enumerate() {
        let sign = if side == 0 { -1.0 } else { 1.0 };
        let mut radii = [0.0; 3];
        for a in 0..3 {
            radii[a] = spec.lung_radii_mm[a] * jitter(1.0) / sp[a];
        }
        *lung = Ellipsoid {
            center: [
                mid[0] + shift[0],
                mid[1] + shift[1],
                mid[2] + shift[2] + sign * spec.lung_offset_mm / sp[2],
            ],
            radii,
        };
    }
    let body = Ellipsoid {
        center: [mid[0], mid[1] + shift[1], mid[2] + shift[2]],
        radii: [
            nz as f64 * 4.0,
            (spec.lung_radii_mm[1] * 1.25) / sp[1],
            (spec.lung_offset_mm + spec.lung_radii_mm[2] * 1.35) / sp[2],
        ],
    };

    let g = (grade - 1) as usize;
    let (rlo, rhi) = spec.lesion_radius_mm[g];
    let mut blobs = Vec::new();
    for _ in 0..spec.lesion_count[g] {
        let host = lungs[rng.random_range(0..2)];
        // rejection-sample a center inside 60% of the host lung
        let center = loop {
            let u = [
                2.0 * rng.random::<f64>() - 1.0,
                2.0 * rng.random::<f64>() - 1.0,
                2.0 * rng.random::<f64>() - 1.0,
            ];
            if u.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                break [
                    host.center[0] + 0.6 * u[0] * host.radii[0],
                    host.center[1] + 0.6 * u[1] * host.radii[1],
                    host.center[2] + 0.6 * u[2] * host.radii[2],
                ];
            }
        };
        let r_mm = rlo + (rhi - rlo) * rng.random::<f64>();
        blobs.push(Ellipsoid {
            center,
            radii: [r_mm / sp[0], r_mm / sp[1], r_mm / sp[2]],
        });
    }

    let noise = Normal::new(0.0, spec.noise_hu.max(1e-12)).expect("valid sigma");
    let mut lung_mask = Grid3::filled(spec.shape, 0u8);
    let mut lesion_mask = Grid3::filled(spec.shape, 0u8);
    let mut voxels = Grid3::filled(spec.shape, AIR_HU);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let in_lung = lungs.iter().any(|l| l.contains(z, y, x));
                let in_blob = in_lung && blobs.iter().any(|b| b.contains(z, y, x));
                let base = if in_blob {
                    GGO_HU
                } else if in_lung {
                    LUNG_HU
                } else if body.contains(z, y, x) {
                    TISSUE_HU
                } else {
                    AIR_HU
                };
                let n = if spec.noise_hu > 0.0 {
                    noise.sample(&mut rng) as f32
                } else {
                    0.0
                };
                voxels.set(z, y, x, base + n);
                lung_mask.set(z, y, x, u8::from(in_lung));
                lesion_mask.set(z, y, x, u8::from(in_blob));
            }
        }
    }

    let id = scan_id(index);
    SyntheticScan {
        volume: CtVolume {
            voxels,
            spacing_mm: sp,
            scan_id: id.clone(),
        },
        lung: BinaryMask {
            voxels: lung_mask,
            spacing_mm: sp,
            kind: MaskKind::Lung,
        },
        lesion: BinaryMask {
            voxels: lesion_mask,
            spacing_mm: sp,
            kind: MaskKind::Lesion,
        },
        scan_id: id,
        grade,
        lungs,
        blobs,
    }
}

/// Writes volumes, ground-truth mask sidecars and `manifest.csv` under
/// `out_dir`; returns the manifest path.
pub fn write_dataset(spec: &SyntheticSpec, out_dir: &Path) -> Result<PathBuf, VolumeError> {
    let mut records = Vec::with_capacity(spec.n_scans);
    for i in 0..spec.n_scans {
        let scan = generate_scan(spec, i);
        let path = out_dir.join("volumes").join(format!("{}.raw", scan.scan_id));
        write_volume(&path, &scan.volume)?;
        write_mask(&mask_sidecar_path(&path, MaskKind::Lung), &scan.lung)?;
        write_mask(&mask_sidecar_path(&path, MaskKind::Lesion), &scan.lesion)?;
        records.push(ScanRecord {
            scan_id: scan.scan_id.clone(),
            patient_id: format!("pat{i:04}"),
            volume_path: path,
            label: GradeLabel::corads(scan.grade).expect("grade in range"),
            lung_mask_path: None,
            lesion_mask_path: None,
        });
    }
    let manifest = out_dir.join("manifest.csv");
    let text = format_manifest(&records, out_dir);
    write_atomic(&manifest, text.as_bytes()).map_err(|source| VolumeError::Io {
        path: manifest.clone(),
        source,
    })?;
    let spec_json = serde_json::to_vec_pretty(spec).expect("spec serializes");
    let spec_path = out_dir.join("synth_spec.json");
    write_atomic(&spec_path, &spec_json).map_err(|source| VolumeError::Io {
        path: spec_path,
        source,
    })?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            n_scans: 10,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn expected_volume_increases_with_grade() {
        let spec = SyntheticSpec::default();
        let v: Vec<f64> = (1..=5).map(|g| spec.expected_lesion_volume(g)).collect();
        assert_eq!(v[0], 0.0);
        for w in v.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn masks_match_analytic_shapes() {
        let scan = generate_scan(&small(), 4);
        assert_eq!(scan.grade, 5);
        let [nz, ny, nx] = scan.volume.shape();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let inside = scan.lungs.iter().any(|l| l.contains(z, y, x));
                    assert_eq!(scan.lung.voxels.get(z, y, x) == 1, inside);
                    if scan.lesion.voxels.get(z, y, x) == 1 {
                        assert!(inside);
                    }
                }
            }
        }
        assert!(!scan.lesion.is_empty());
        assert!(generate_scan(&small(), 0).lesion.is_empty());
    }

    #[test]
    fn phantom_is_independent_of_dataset_size() {
        let a = generate_scan(&small(), 7);
        let b = generate_scan(
            &SyntheticSpec {
                n_scans: 500,
                ..small()
            },
            7,
        );
        assert_eq!(a.volume, b.volume);
    }
}
