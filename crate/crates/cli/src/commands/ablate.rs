use std::path::PathBuf;

use corads_model::{Dimensionality, HeadKind};
use serde::{Deserialize, Serialize};

use super::train::train_run;
use crate::cache::CacheStats;
use crate::config::{config_diff, ExperimentConfig};
use crate::data::{self, write_json};
use crate::error::{CliError, Result};
use crate::run::AblationInfo;

/// The four components toggled by the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    Pretrained,
    Lesion,
    Head,
    Dimensionality,
}

impl AblationAxis {
    pub const ALL: [AblationAxis; 4] = [
        AblationAxis::Pretrained,
        AblationAxis::Lesion,
        AblationAxis::Head,
        AblationAxis::Dimensionality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::Pretrained => "pretrained",
            AblationAxis::Lesion => "lesion",
            AblationAxis::Head => "head",
            AblationAxis::Dimensionality => "dimensionality",
        }
    }

    /// Flips this component of `config`.
    pub fn toggle(self, config: &mut ExperimentConfig) {
        let m = &mut config.model;
        match self {
            AblationAxis::Pretrained => m.pretrained = !m.pretrained,
            AblationAxis::Lesion => m.input_channels = if m.input_channels == 2 { 1 } else { 2 },
            AblationAxis::Head => {
                m.head = match m.head {
                    HeadKind::Continuous => HeadKind::Categorical,
                    HeadKind::Categorical => HeadKind::Continuous,
                }
            }
            AblationAxis::Dimensionality => {
                m.dimensionality = match m.dimensionality {
                    Dimensionality::D3 => Dimensionality::D2,
                    Dimensionality::D2 => Dimensionality::D3,
                }
            }
        }
    }

    /// Setting of this component in `config`, e.g. `lesion=off`.
    pub fn describe(self, config: &ExperimentConfig) -> String {
        let m = &config.model;
        let value = match self {
            AblationAxis::Pretrained => m.pretrained.to_string(),
            AblationAxis::Lesion => if m.input_channels == 2 { "on" } else { "off" }.to_string(),
            AblationAxis::Head => match m.head {
                HeadKind::Continuous => "continuous".to_string(),
                HeadKind::Categorical => "categorical".to_string(),
            },
            AblationAxis::Dimensionality => match m.dimensionality {
                Dimensionality::D3 => "3d".to_string(),
                Dimensionality::D2 => "2d".to_string(),
            },
        };
        format!("{}={value}", self.name())
    }
}

impl std::str::FromStr for AblationAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        AblationAxis::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| format!("unknown ablation axis '{s}' (pretrained, lesion, head, dimensionality)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AblationGrid {
    /// Every combination of the listed axes, base included.
    Axes(Vec<AblationAxis>),
    /// The base model, the base without each 3D component, and the 2D model.
    Standard,
}

impl AblationGrid {
    /// Sets of toggled axes, one per grid point.
    pub fn points(&self) -> Vec<Vec<AblationAxis>> {
        match self {
            AblationGrid::Axes(axes) => {
                let mut axes = axes.clone();
                axes.sort();
                axes.dedup();
                (0..1usize << axes.len())
                    .map(|mask| {
                        axes.iter()
                            .enumerate()
                            .filter(|(i, _)| mask & (1 << i) != 0)
                            .map(|(_, &a)| a)
                            .collect()
                    })
                    .collect()
            }
            AblationGrid::Standard => vec![
                vec![],
                vec![AblationAxis::Pretrained],
                vec![AblationAxis::Lesion],
                vec![AblationAxis::Head],
                vec![AblationAxis::Dimensionality],
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub label: String,
    pub toggled: Vec<AblationAxis>,
    pub run_dir: PathBuf,
    pub trained: Vec<usize>,
    pub skipped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub base_run: String,
    pub points: Vec<AblationPoint>,
    pub cache: CacheStats,
    pub summary_path: PathBuf,
}

pub fn point_label(base: &ExperimentConfig, toggled: &[AblationAxis]) -> String {
    if toggled.is_empty() {
        return "base".to_string();
    }
    let mut cfg = base.clone();
    toggled.iter().for_each(|a| a.toggle(&mut cfg));
    toggled.iter().map(|a| a.describe(&cfg)).collect::<Vec<_>>().join(",")
}

/// Trains one run per grid point. All points share the preprocessing cache.
pub fn cmd_ablate(base: &ExperimentConfig, grid: &AblationGrid) -> Result<AblationSummary> {
    base.validate()?;
    let base_run = base.run_id()?;
    let cache = data::open_cache(base);
    let mut points = Vec::new();
    for toggled in grid.points() {
        let label = point_label(base, &toggled);
        let mut cfg = base.clone();
        toggled.iter().for_each(|a| a.toggle(&mut cfg));
        let wrap = |source: CliError| CliError::AblationPoint {
            label: label.clone(),
            source: Box::new(source),
        };
        cfg.validate().map_err(wrap)?;
        let info = AblationInfo {
            label: label.clone(),
            toggled: toggled.iter().map(|a| a.name().to_string()).collect(),
            base_run: base_run.clone(),
            diff: config_diff(base, &cfg),
        };
        log::info!("ablation point '{label}'");
        let summary = train_run(&cfg, &cache, Some(info)).map_err(wrap)?;
        points.push(AblationPoint {
            label,
            toggled,
            run_dir: summary.run_dir,
            trained: summary.trained,
            skipped: summary.skipped,
        });
    }
    let stats = cache.stats();
    log::info!(
        "preprocessing cache: {} hits, {} misses ({:.1}% hit rate)",
        stats.hits,
        stats.misses,
        100.0 * stats.hit_rate()
    );
    let summary_path = base.output.runs_dir.join(format!("ablation-{base_run}.json"));
    let summary = AblationSummary {
        base_run,
        points,
        cache: stats,
        summary_path: summary_path.clone(),
    };
    write_json(&summary_path, &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_factorial_over_two_axes() {
        let g = AblationGrid::Axes(vec![AblationAxis::Lesion, AblationAxis::Pretrained]);
        let p = g.points();
        assert_eq!(p.len(), 4);
        assert!(p.contains(&vec![]));
        assert!(p.contains(&vec![AblationAxis::Pretrained, AblationAxis::Lesion]));
    }

    #[test]
    fn standard_grid_has_five_points() {
        let p = AblationGrid::Standard.points();
        assert_eq!(p.len(), 5);
        assert!(p[1..].iter().all(|t| t.len() == 1));
    }

    #[test]
    fn toggles_are_involutions() {
        let base = ExperimentConfig::default();
        for a in AblationAxis::ALL {
            let mut c = base.clone();
            a.toggle(&mut c);
            assert_ne!(c, base);
            a.toggle(&mut c);
            assert_eq!(c, base);
            assert_eq!(a.name().parse::<AblationAxis>(), Ok(a));
        }
        assert_eq!(point_label(&base, &[AblationAxis::Lesion, AblationAxis::Head]), "lesion=off,head=categorical");
    }
}
