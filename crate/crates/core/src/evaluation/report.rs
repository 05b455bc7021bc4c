use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::bootstrap::{auc_ci, qwk_ci, BootstrapConfig};
use super::metrics::{confusion_matrix, qwk, roc_auc, RocPoint};
use super::predictions::PredictionRow;
use super::EvalError;
use crate::dataset::{to_binary, LabelScheme, ScanRecord};

/// Rule collapsing ground-truth labels into negative/positive for ROC
/// analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dichotomization {
    /// CO-RADS 1-2 negative, 3-5 positive.
    Corads12Vs345,
    /// iCTCF Control negative, every other graded category positive.
    IctcfControlVsRest,
    /// Labels are already binary.
    Binary,
}

impl Dichotomization {
    pub fn for_scheme(scheme: LabelScheme) -> Self {
        match scheme {
            LabelScheme::Corads => Dichotomization::Corads12Vs345,
            LabelScheme::Ictcf => Dichotomization::IctcfControlVsRest,
            LabelScheme::Binary => Dichotomization::Binary,
        }
    }

    fn scheme(self) -> LabelScheme {
        match self {
            Dichotomization::Corads12Vs345 => LabelScheme::Corads,
            Dichotomization::IctcfControlVsRest => LabelScheme::Ictcf,
            Dichotomization::Binary => LabelScheme::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_scans: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub dichotomization: Dichotomization,
    pub auc: f64,
    pub auc_ci: (f64, f64),
    pub roc_points: Vec<RocPoint>,
    /// Absent when grades are unavailable (non-CO-RADS ground truth).
    pub qwk: Option<f64>,
    pub qwk_ci: Option<(f64, f64)>,
    pub confusion: Option<Vec<Vec<u64>>>,
    pub bootstrap: BootstrapConfig,
    /// Scans excluded from evaluation (e.g. suspected cases).
    pub excluded: Vec<String>,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Invalid(e.to_string()))
    }
}

/// Scores every manifest scan against its prediction.
///
/// CO-RADS manifests get kappa, confusion matrix and AUC; other schemes AUC
/// only. Suspected iCTCF cases are excluded.
pub fn evaluate_run(
    predictions: &[PredictionRow],
    manifest: &[ScanRecord],
    dichotomization: Option<Dichotomization>,
    bootstrap: BootstrapConfig,
) -> Result<EvalReport, EvalError> {
    let scheme = manifest
        .first()
        .map(|r| r.scheme())
        .ok_or(EvalError::TooFew { needed: 1, got: 0 })?;
    if manifest.iter().any(|r| r.scheme() != scheme) {
        return Err(EvalError::Invalid("manifest mixes label schemes".into()));
    }
    let rule = dichotomization.unwrap_or_else(|| Dichotomization::for_scheme(scheme));
    if rule.scheme() != scheme {
        return Err(EvalError::Invalid(format!(
            "dichotomization {rule:?} does not apply to {scheme} labels"
        )));
    }

    let by_id: HashMap<&str, &PredictionRow> =
        predictions.iter().map(|p| (p.scan_id.as_str(), p)).collect();
    let (kept, excluded): (Vec<&ScanRecord>, Vec<&ScanRecord>) =
        manifest.iter().partition(|r| !r.label.is_suspected());
    let missing: Vec<String> = kept
        .iter()
        .filter(|r| !by_id.contains_key(r.scan_id.as_str()))
        .map(|r| r.scan_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions(missing));
    }

    let preds: Vec<&PredictionRow> = kept.iter().map(|r| by_id[r.scan_id.as_str()]).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.positive_score).collect();
    let labels: Vec<bool> = kept
        .iter()
        .map(|r| match scheme {
            LabelScheme::Binary => r.label.value() == 1,
            _ => to_binary(r.label).map(|b| b.value() == 1).unwrap_or(false),
        })
        .collect();
    let roc = roc_auc(&scores, &labels)?;
    let auc_interval = auc_ci(&scores, &labels, bootstrap)?;

    let (kappa, kappa_ci, confusion) = if scheme == LabelScheme::Corads {
        let truth: Vec<i32> = kept.iter().map(|r| r.label.value()).collect();
        let graded: Vec<i32> = preds.iter().map(|p| p.corads).collect();
        (
            Some(qwk(&truth, &graded, 5)?),
            Some(qwk_ci(&truth, &graded, bootstrap)?),
            Some(confusion_matrix(&truth, &graded, 5)?),
        )
    } else {
        (None, None, None)
    };

    let n_pos = labels.iter().filter(|&&l| l).count();
    Ok(EvalReport {
        n_scans: kept.len(),
        n_pos,
        n_neg: kept.len() - n_pos,
        dichotomization: rule,
        auc: roc.auc,
        auc_ci: auc_interval,
        roc_points: roc.points,
        qwk: kappa,
        qwk_ci: kappa_ci,
        confusion,
        bootstrap,
        excluded: excluded.iter().map(|r| r.scan_id.clone()).collect(),
        provenance: BTreeMap::new(),
    })
}
