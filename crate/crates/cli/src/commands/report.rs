use std::fmt::Write;
use std::path::{Path, PathBuf};

use corads_core::dataset::load_manifest;
use corads_core::ScanRecord;
use serde::{Deserialize, Serialize};

use super::ablate::AblationSummary;
use super::evaluate::{cmd_evaluate, paired_comparison, EvaluateOptions};
use crate::data::{self, read_json, write_json, write_text};
use crate::error::{CliError, Result};
use crate::plot::{auc_bars_svg, roc_svg};
use crate::run::{RunDir, SPLIT_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub run_id: String,
    pub members: usize,
    pub n_scans: usize,
    pub auc: f64,
    pub auc_ci: (f64, f64),
    pub qwk: Option<f64>,
    pub qwk_ci: Option<(f64, f64)>,
    pub mean_member_auc: f64,
    /// Paired bootstrap p-value of the AUC against the first row.
    pub auc_p_vs_first: Option<f64>,
}

/// `(label, run dir)` pairs of an ablation summary file.
pub fn runs_from_ablation(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let summary: AblationSummary = read_json(path)?;
    Ok(summary.points.into_iter().map(|p| (p.label, p.run_dir)).collect())
}

/// Evaluates each run on the same scans and writes a comparison table,
/// an AUC bar chart and overlaid ROC curves to `out_dir`.
pub fn cmd_report(runs: &[(String, PathBuf)], options: &EvaluateOptions, out_dir: &Path) -> Result<Vec<ReportRow>> {
    if runs.is_empty() {
        return Err(CliError::Usage("report needs at least one run".into()));
    }
    let per_run = EvaluateOptions {
        out_dir: None,
        against: None,
        ..options.clone()
    };
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut first: Option<(String, Vec<corads_core::evaluation::PredictionRow>, Vec<ScanRecord>)> = None;
    for (label, dir) in runs {
        let eval = cmd_evaluate(dir, &per_run)?;
        let run = RunDir::open(dir)?;
        let records = evaluated_records(&run, options)?;
        let p = match &first {
            None => None,
            Some((name, base_rows, base_records)) => {
                if base_records.iter().map(|r| &r.scan_id).ne(records.iter().map(|r| &r.scan_id)) {
                    return Err(CliError::Usage(format!(
                        "run {label} was evaluated on different scans than {name}"
                    )));
                }
                let bootstrap = options.bootstrap.unwrap_or(run.config.evaluation.bootstrap);
                let c = paired_comparison(
                    label,
                    &eval.predictions,
                    name,
                    base_rows,
                    &records,
                    bootstrap,
                    options.sidedness,
                )?;
                Some(c.auc_p)
            }
        };
        if first.is_none() {
            first = Some((label.clone(), eval.predictions.clone(), records));
        }
        curves.push((format!("{label} ({:.3})", eval.report.auc), eval.report.roc_points.clone()));
        rows.push(ReportRow {
            label: label.clone(),
            run_id: run.metadata.run_id.clone(),
            members: eval.ensemble.members.len(),
            n_scans: eval.report.n_scans,
            auc: eval.report.auc,
            auc_ci: eval.report.auc_ci,
            qwk: eval.report.qwk,
            qwk_ci: eval.report.qwk_ci,
            mean_member_auc: eval.ensemble.mean_member_auc,
            auc_p_vs_first: p,
        });
    }
    write_json(&out_dir.join("summary.json"), &rows)?;
    write_text(&out_dir.join("summary.md"), &markdown(&rows))?;
    let bars: Vec<(String, f64, (f64, f64))> = rows.iter().map(|r| (r.label.clone(), r.auc, r.auc_ci)).collect();
    write_text(&out_dir.join("auc.svg"), &auc_bars_svg("AUC with 95% CI", &bars))?;
    write_text(&out_dir.join("roc.svg"), &roc_svg("ROC", &curves))?;
    Ok(rows)
}

fn evaluated_records(run: &RunDir, options: &EvaluateOptions) -> Result<Vec<ScanRecord>> {
    match &options.manifest {
        Some(path) => Ok(load_manifest(path)?),
        None => {
            let records = data::records(&run.config)?;
            let split = corads_core::SplitAssignment::from_csv(&data::read_text(&run.path.join(SPLIT_FILE))?)?;
            Ok(split.select(&records, options.split).into_iter().cloned().collect())
        }
    }
}

fn markdown(rows: &[ReportRow]) -> String {
    let mut out = String::from("| run | members | scans | AUC (95% CI) | QWK (95% CI) | mean member AUC | p vs first |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for r in rows {
        let qwk = match (r.qwk, r.qwk_ci) {
            (Some(q), Some((lo, hi))) => format!("{q:.3} ({lo:.3}-{hi:.3})"),
            _ => "n/a".to_string(),
        };
        let p = r.auc_p_vs_first.map_or("-".to_string(), |p| format!("{p:.3}"));
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.3} ({:.3}-{:.3}) | {qwk} | {:.3} | {p} |",
            r.label, r.members, r.n_scans, r.auc, r.auc_ci.0, r.auc_ci.1, r.mean_member_auc
        );
    }
    out
}
