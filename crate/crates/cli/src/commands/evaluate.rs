use std::collections::HashMap;
use std::path::{Path, PathBuf};

use corads_core::dataset::load_manifest;
use corads_core::evaluation::{
    auc_significance, evaluate_run, qwk_significance, write_predictions, BootstrapConfig, EvalReport,
    PredictionRow, RocCurve, Sidedness,
};
use corads_core::{LabelScheme, ScanRecord, Split};
use corads_pipeline::inference::mean_output;
use corads_pipeline::Ensemble;
use serde::{Deserialize, Serialize};

use crate::data::{self, write_json, write_text};
use crate::error::{CliError, Result};
use crate::plot::{confusion_svg, roc_svg};
use crate::run::RunDir;

pub const REPORT_FILE: &str = "report.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const MEMBERS_FILE: &str = "members.json";
pub const COMPARISON_FILE: &str = "comparison.json";

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    /// Scans to evaluate; the run's own `split` when absent.
    pub manifest: Option<PathBuf>,
    pub split: Split,
    /// Defaults to `<run>/eval-<split or manifest stem>`.
    pub out_dir: Option<PathBuf>,
    /// Second run for a paired significance test.
    pub against: Option<PathBuf>,
    pub sidedness: Sidedness,
    /// Overrides the run's bootstrap settings.
    pub bootstrap: Option<BootstrapConfig>,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            manifest: None,
            split: Split::Test,
            out_dir: None,
            against: None,
            sidedness: Sidedness::TwoSided,
            bootstrap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberScore {
    pub member: usize,
    pub seed: u64,
    pub auc: f64,
    pub auc_ci: (f64, f64),
    pub qwk: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub ensemble_auc: f64,
    pub mean_member_auc: f64,
    pub members: Vec<MemberScore>,
    /// Seeds of members without a finished checkpoint.
    pub missing_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub run: String,
    pub against: String,
    pub sidedness: Sidedness,
    pub auc: (f64, f64),
    pub auc_p: f64,
    pub qwk: Option<(f64, f64)>,
    pub qwk_p: Option<f64>,
}

pub struct Evaluation {
    pub out_dir: PathBuf,
    pub report: EvalReport,
    pub ensemble: EnsembleSummary,
    pub predictions: Vec<PredictionRow>,
    pub comparison: Option<Comparison>,
}

/// Scans selected by the options, in manifest order.
fn scans(run: &RunDir, options: &EvaluateOptions) -> Result<(Vec<ScanRecord>, String)> {
    match &options.manifest {
        Some(path) => {
            let records = load_manifest(path)?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "manifest".into());
            Ok((records, stem))
        }
        None => {
            let records = data::records(&run.config)?;
            let split_text = data::read_text(&run.path.join(crate::run::SPLIT_FILE))?;
            let split = corads_core::SplitAssignment::from_csv(&split_text)?;
            let chosen: Vec<ScanRecord> = split.select(&records, options.split).into_iter().cloned().collect();
            if chosen.is_empty() {
                return Err(CliError::Usage(format!(
                    "run {} has no {} scans; pass a manifest",
                    run.metadata.run_id,
                    options.split.as_str()
                )));
            }
            Ok((chosen, options.split.as_str().to_string()))
        }
    }
}

/// Ensemble and per-member predictions of the complete members of `run`.
pub fn predict_records(
    run: &RunDir,
    records: &[ScanRecord],
) -> Result<(Vec<PredictionRow>, Vec<(usize, Vec<PredictionRow>)>, Vec<u64>)> {
    let (present, missing) = run.members();
    if present.is_empty() {
        return Err(CliError::NoMembers(run.path.clone()));
    }
    if !missing.is_empty() {
        log::warn!(
            "{}: evaluating {} of {} members; absent seeds {missing:?}",
            run.metadata.run_id,
            present.len(),
            run.metadata.member_seeds.len()
        );
    }
    let nets = present.iter().map(|&i| run.load_member(i)).collect::<Result<Vec<_>>>()?;
    let mut ensemble = Ensemble::new(nets)?;
    let cache = data::open_cache(&run.config);
    let refs: Vec<&ScanRecord> = records.iter().collect();
    let inputs = data::model_inputs(&run.config, &cache, &refs)?;
    let mut rows = Vec::with_capacity(records.len());
    let mut member_rows: Vec<(usize, Vec<PredictionRow>)> = present.iter().map(|&i| (i, Vec::new())).collect();
    for (record, input) in records.iter().zip(&inputs) {
        let outputs = ensemble.member_outputs(input)?;
        for ((_, list), out) in member_rows.iter_mut().zip(&outputs) {
            list.push(row(&record.scan_id, out));
        }
        rows.push(row(&record.scan_id, &mean_output(&outputs)?));
    }
    Ok((rows, member_rows, missing))
}

fn row(scan_id: &str, out: &corads_model::NetworkOutput) -> PredictionRow {
    PredictionRow {
        scan_id: scan_id.to_string(),
        positive_score: out.positive_score(),
        corads: out.corads(),
        raw: out.raw(),
    }
}

/// Evaluates a trained run: predictions, report, figures, per-member scores
/// and an optional paired comparison.
pub fn cmd_evaluate(run_dir: &Path, options: &EvaluateOptions) -> Result<Evaluation> {
    let run = RunDir::open(run_dir)?;
    let (records, label) = scans(&run, options)?;
    let bootstrap = options.bootstrap.unwrap_or(run.config.evaluation.bootstrap);
    let out_dir = options
        .out_dir
        .clone()
        .unwrap_or_else(|| run.path.join(format!("eval-{label}")));

    let (rows, member_rows, missing) = predict_records(&run, &records)?;
    let mut report = evaluate_run(&rows, &records, None, bootstrap)?;
    report.provenance.insert("run".into(), run.metadata.run_id.clone());
    report.provenance.insert("config_hash".into(), run.metadata.config_hash.clone());
    report.provenance.insert("scans".into(), label);
    let used: Vec<String> = member_rows
        .iter()
        .map(|(i, _)| run.metadata.member_seeds[*i].to_string())
        .collect();
    report.provenance.insert("member_seeds".into(), used.join(","));

    let mut members = Vec::new();
    for (i, mrows) in &member_rows {
        let r = evaluate_run(mrows, &records, None, bootstrap)?;
        members.push(MemberScore {
            member: *i,
            seed: run.metadata.member_seeds[*i],
            auc: r.auc,
            auc_ci: r.auc_ci,
            qwk: r.qwk,
        });
    }
    let ensemble = EnsembleSummary {
        ensemble_auc: report.auc,
        mean_member_auc: members.iter().map(|m| m.auc).sum::<f64>() / members.len() as f64,
        members,
        missing_seeds: missing,
    };

    let comparison = match &options.against {
        Some(other) => Some(compare(&run, &rows, other, &records, bootstrap, options.sidedness)?),
        None => None,
    };

    write_predictions(&out_dir.join(PREDICTIONS_FILE), &rows)?;
    write_text(&out_dir.join(REPORT_FILE), &(report.to_json() + "\n"))?;
    let curve = RocCurve {
        auc: report.auc,
        points: report.roc_points.clone(),
    };
    write_text(&out_dir.join("roc.csv"), &curve.to_csv())?;
    let title = format!("{} (AUC {:.3})", run.metadata.run_id, report.auc);
    write_text(
        &out_dir.join("roc.svg"),
        &roc_svg(&title, &[(run.metadata.run_id.clone(), report.roc_points.clone())]),
    )?;
    if let Some(m) = &report.confusion {
        write_text(&out_dir.join("confusion.svg"), &confusion_svg("CO-RADS confusion", m))?;
    }
    write_json(&out_dir.join(MEMBERS_FILE), &ensemble)?;
    if let Some(c) = &comparison {
        write_json(&out_dir.join(COMPARISON_FILE), c)?;
        log::info!("AUC {:.4} vs {:.4}: p = {}", c.auc.0, c.auc.1, c.auc_p);
    }
    log::info!(
        "{}: AUC {:.4} [{:.4}, {:.4}] on {} scans; report in {}",
        run.metadata.run_id,
        report.auc,
        report.auc_ci.0,
        report.auc_ci.1,
        report.n_scans,
        out_dir.display()
    );
    Ok(Evaluation {
        out_dir,
        report,
        ensemble,
        predictions: rows,
        comparison,
    })
}

fn compare(
    run: &RunDir,
    rows: &[PredictionRow],
    other_dir: &Path,
    records: &[ScanRecord],
    bootstrap: BootstrapConfig,
    sidedness: Sidedness,
) -> Result<Comparison> {
    let other = RunDir::open(other_dir)?;
    let (other_rows, _, _) = predict_records(&other, records)?;
    paired_comparison(
        &run.metadata.run_id,
        rows,
        &other.metadata.run_id,
        &other_rows,
        records,
        bootstrap,
        sidedness,
    )
}

/// Paired bootstrap tests of AUC (and QWK for CO-RADS labels) between two
/// prediction sets over the same scans.
pub fn paired_comparison(
    name_a: &str,
    rows_a: &[PredictionRow],
    name_b: &str,
    rows_b: &[PredictionRow],
    records: &[ScanRecord],
    bootstrap: BootstrapConfig,
    sidedness: Sidedness,
) -> Result<Comparison> {
    let index = |rows: &[PredictionRow]| -> HashMap<String, PredictionRow> {
        rows.iter().map(|r| (r.scan_id.clone(), r.clone())).collect()
    };
    let (a, b) = (index(rows_a), index(rows_b));
    let mut scores = (Vec::new(), Vec::new());
    let mut grades = (Vec::new(), Vec::new());
    let mut labels = Vec::new();
    let mut truth = Vec::new();
    for r in records {
        let Some(label) = data::binary_truth(r) else { continue };
        let (pa, pb) = match (a.get(&r.scan_id), b.get(&r.scan_id)) {
            (Some(pa), Some(pb)) => (pa, pb),
            _ => {
                return Err(corads_core::evaluation::EvalError::MissingPredictions(vec![r.scan_id.clone()]).into())
            }
        };
        scores.0.push(pa.positive_score);
        scores.1.push(pb.positive_score);
        grades.0.push(pa.corads);
        grades.1.push(pb.corads);
        labels.push(label);
        truth.push(r.label.value());
    }
    let auc = |s: &[f64]| corads_core::evaluation::roc_auc(s, &labels).map(|c| c.auc);
    let auc_pair = (auc(&scores.0)?, auc(&scores.1)?);
    let auc_p = auc_significance(&scores.0, &scores.1, &labels, bootstrap, sidedness)?;
    let corads = records.iter().all(|r| r.scheme() == LabelScheme::Corads);
    let (qwk, qwk_p) = if corads {
        let k = |p: &[i32]| corads_core::evaluation::qwk(&truth, p, 5);
        (
            Some((k(&grades.0)?, k(&grades.1)?)),
            Some(qwk_significance(&grades.0, &grades.1, &truth, bootstrap, sidedness)?),
        )
    } else {
        (None, None)
    };
    Ok(Comparison {
        run: name_a.to_string(),
        against: name_b.to_string(),
        sidedness,
        auc: auc_pair,
        auc_p,
        qwk,
        qwk_p,
    })
}
