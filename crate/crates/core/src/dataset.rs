//! Manifests, label schemes and patient-grouped stratified splits.
//!
//! Manifest format (UTF-8, comma separated, `#` starts a comment line):
//!
//! ```text
//! scan_id,patient_id,volume_path,scheme,label
//! s001,p001,volumes/s001.raw,corads,4
//! ```
//!
//! Two optional trailing columns, `lung_mask_path` and `lesion_mask_path`,
//! register externally supplied masks. Relative paths resolve against the
//! manifest's directory.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest not found: {0}")]
    MissingFile(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: {msg}")]
    Malformed { row: u64, msg: String },
    #[error("row {row}: illegal label {value} for scheme {scheme}")]
    IllegalLabel {
        row: u64,
        scheme: LabelScheme,
        value: i32,
    },
    #[error("illegal label {value} for scheme {scheme}")]
    InvalidLabel { scheme: LabelScheme, value: i32 },
    #[error("label is already binary")]
    AlreadyBinary,
    #[error("suspected cases have no binary label")]
    Suspected,
    #[error("records mix label schemes: {0:?}")]
    MixedSchemes(Vec<LabelScheme>),
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions(SplitFractions),
    #[error("classes with fewer patients than splits: {0:?}")]
    SparseClasses(Vec<i32>),
    #[error("duplicate scan_id {0}")]
    DuplicateScan(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    Corads,
    Ictcf,
    Binary,
}

impl fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelScheme::Corads => "corads",
            LabelScheme::Ictcf => "ictcf",
            LabelScheme::Binary => "binary",
        })
    }
}

impl FromStr for LabelScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "corads" | "co-rads" => Ok(LabelScheme::Corads),
            "ictcf" => Ok(LabelScheme::Ictcf),
            "binary" => Ok(LabelScheme::Binary),
            other => Err(format!("unknown label scheme '{other}'")),
        }
    }
}

/// iCTCF severity codes.
pub mod ictcf {
    pub const CONTROL: i32 = 0;
    pub const MILD: i32 = 1;
    pub const REGULAR: i32 = 2;
    pub const SEVERE: i32 = 3;
    pub const CRITICALLY_ILL: i32 = 4;
    /// Sentinel for "Suspected" cases, which carry no etiological evidence
    /// and are excluded from evaluation.
    pub const SUSPECTED: i32 = -1;

    pub fn name(code: i32) -> &'static str {
        match code {
            CONTROL => "Control",
            MILD => "Mild",
            REGULAR => "Regular",
            SEVERE => "Severe",
            CRITICALLY_ILL => "Critically ill",
            SUSPECTED => "Suspected",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GradeLabel {
    scheme: LabelScheme,
    value: i32,
}

impl GradeLabel {
    pub fn new(scheme: LabelScheme, value: i32) -> Result<Self, DatasetError> {
        let ok = match scheme {
            LabelScheme::Corads => (1..=5).contains(&value),
            LabelScheme::Ictcf => (0..=4).contains(&value) || value == ictcf::SUSPECTED,
            LabelScheme::Binary => value == 0 || value == 1,
        };
        if ok {
            Ok(Self { scheme, value })
        } else {
            Err(DatasetError::InvalidLabel { scheme, value })
        }
    }

    pub fn corads(value: i32) -> Result<Self, DatasetError> {
        Self::new(LabelScheme::Corads, value)
    }

    pub fn scheme(&self) -> LabelScheme {
        self.scheme
    }

    pub fn value(&self) -> i32 {
        self.value
    }

    pub fn is_suspected(&self) -> bool {
        self.scheme == LabelScheme::Ictcf && self.value == ictcf::SUSPECTED
    }
}

/// Collapses a graded label into negative (0) / positive (1).
///
/// CO-RADS 1-2 are negative, 3-5 positive. iCTCF Control is negative, every
/// other graded category positive.
pub fn to_binary(label: GradeLabel) -> Result<GradeLabel, DatasetError> {
    let positive = match label.scheme {
        LabelScheme::Corads => label.value >= 3,
        LabelScheme::Ictcf if label.is_suspected() => return Err(DatasetError::Suspected),
        LabelScheme::Ictcf => label.value != ictcf::CONTROL,
        LabelScheme::Binary => return Err(DatasetError::AlreadyBinary),
    };
    Ok(GradeLabel {
        scheme: LabelScheme::Binary,
        value: positive as i32,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub scan_id: String,
    pub patient_id: String,
    pub volume_path: PathBuf,
    pub label: GradeLabel,
    #[serde(default)]
    pub lung_mask_path: Option<PathBuf>,
    #[serde(default)]
    pub lesion_mask_path: Option<PathBuf>,
}

impl ScanRecord {
    pub fn scheme(&self) -> LabelScheme {
        self.label.scheme()
    }
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    scan_id: String,
    patient_id: String,
    volume_path: String,
    scheme: String,
    label: String,
    #[serde(default)]
    lung_mask_path: Option<String>,
    #[serde(default)]
    lesion_mask_path: Option<String>,
}

pub fn load_manifest(path: &Path) -> Result<Vec<ScanRecord>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            DatasetError::MissingFile(path.to_path_buf())
        } else {
            DatasetError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(&text, base)
}

/// Parses manifest text; relative paths are joined onto `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ScanRecord>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| DatasetError::Malformed {
            row: 1,
            msg: e.to_string(),
        })?
        .clone();
    for required in ["scan_id", "patient_id", "volume_path", "scheme", "label"] {
        if !headers.iter().any(|h| h == required) {
            return Err(DatasetError::Malformed {
                row: 1,
                msg: format!("header lacks column '{required}'"),
            });
        }
    }
    let resolve = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for result in reader.records() {
        let record = result.map_err(|e| DatasetError::Malformed {
            row: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: ManifestRow =
            record
                .deserialize(Some(&headers))
                .map_err(|e| DatasetError::Malformed {
                    row: line,
                    msg: e.to_string(),
                })?;
        let scheme: LabelScheme = row
            .scheme
            .parse()
            .map_err(|msg| DatasetError::Malformed { row: line, msg })?;
        let value: i32 = row.label.parse().map_err(|_| DatasetError::Malformed {
            row: line,
            msg: format!("label '{}' is not an integer", row.label),
        })?;
        let label = GradeLabel::new(scheme, value).map_err(|_| DatasetError::IllegalLabel {
            row: line,
            scheme,
            value,
        })?;
        if row.scan_id.is_empty() {
            return Err(DatasetError::Malformed {
                row: line,
                msg: "empty scan_id".into(),
            });
        }
        if !seen.insert(row.scan_id.clone()) {
            return Err(DatasetError::Malformed {
                row: line,
                msg: format!("duplicate scan_id {}", row.scan_id),
            });
        }
        let opt = |p: Option<String>| p.filter(|s| !s.is_empty()).map(|s| resolve(&s));
        records.push(ScanRecord {
            scan_id: row.scan_id,
            patient_id: row.patient_id,
            volume_path: resolve(&row.volume_path),
            label,
            lung_mask_path: opt(row.lung_mask_path),
            lesion_mask_path: opt(row.lesion_mask_path),
        });
    }
    Ok(records)
}

/// Serializes records in manifest format. Paths are written relative to
/// `base` when they lie below it.
pub fn format_manifest(records: &[ScanRecord], base: &Path) -> String {
    let rel = |p: &Path| -> String {
        p.strip_prefix(base)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };
    let with_masks = records
        .iter()
        .any(|r| r.lung_mask_path.is_some() || r.lesion_mask_path.is_some());
    let mut out = String::from("scan_id,patient_id,volume_path,scheme,label");
    if with_masks {
        out.push_str(",lung_mask_path,lesion_mask_path");
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}",
            r.scan_id,
            r.patient_id,
            rel(&r.volume_path),
            r.label.scheme(),
            r.label.value()
        ));
        if with_masks {
            let m = |p: &Option<PathBuf>| p.as_deref().map(rel).unwrap_or_default();
            out.push_str(&format!(
                ",{},{}",
                m(&r.lung_mask_path),
                m(&r.lesion_mask_path)
            ));
        }
        out.push('\n');
    }
    out
}

/// Histogram of label values. Records must share one scheme.
pub fn class_distribution(records: &[ScanRecord]) -> Result<BTreeMap<i32, usize>, DatasetError> {
    let schemes: BTreeSet<LabelScheme> = records.iter().map(|r| r.scheme()).collect();
    if schemes.len() > 1 {
        return Err(DatasetError::MixedSchemes(schemes.into_iter().collect()));
    }
    let mut hist = BTreeMap::new();
    for r in records {
        *hist.entry(r.label.value()).or_insert(0) += 1;
    }
    Ok(hist)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    #[serde(default)]
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.75,
            validation: 0.25,
            test: 0.0,
        }
    }
}

impl SplitFractions {
    fn get(&self, split: Split) -> f64 {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let parts = [self.train, self.validation, self.test];
        let sum: f64 = parts.iter().sum();
        if parts.iter().any(|f| !(*f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::BadFractions(*self));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment(pub BTreeMap<String, Split>);

impl SplitAssignment {
    pub fn get(&self, scan_id: &str) -> Option<Split> {
        self.0.get(scan_id).copied()
    }

    pub fn select<'a>(&self, records: &'a [ScanRecord], split: Split) -> Vec<&'a ScanRecord> {
        records
            .iter()
            .filter(|r| self.get(&r.scan_id) == Some(split))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scan_id,split\n");
        for (id, s) in &self.0 {
            out.push_str(&format!("{id},{}\n", s.as_str()));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, DatasetError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if i == 0 || line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, split) = line.split_once(',').ok_or(DatasetError::Malformed {
                row: i as u64 + 1,
                msg: "expected scan_id,split".into(),
            })?;
            let split = split.parse().map_err(|msg| DatasetError::Malformed {
                row: i as u64 + 1,
                msg,
            })?;
            if map.insert(id.to_string(), split).is_some() {
                return Err(DatasetError::DuplicateScan(id.to_string()));
            }
        }
        Ok(Self(map))
    }
}

/// Majority label among a patient's scans; ties resolve to the highest value.
fn patient_stratum(labels: &[i32]) -> i32 {
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .max_by_key(|&(label, count)| (count, label))
        .map(|(label, _)| label)
        .expect("patient has at least one scan")
}

/// Largest-remainder apportionment of `n` items over `weights`.
fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Assigns every scan to a split such that a patient's scans stay together
/// and each label stratum is divided in proportion to `fractions`.
///
/// Patients are stratified by their majority label (ties: the highest),
/// shuffled within each stratum by `seed` and apportioned to the splits by
/// largest remainder, so per-stratum patient counts are within one of the
/// target proportions.
pub fn stratified_patient_split(
    records: &[ScanRecord],
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitAssignment, DatasetError> {
    fractions.validate()?;
    let mut patients: BTreeMap<&str, Vec<&ScanRecord>> = BTreeMap::new();
    let mut ids = HashSet::new();
    for r in records {
        if !ids.insert(r.scan_id.as_str()) {
            return Err(DatasetError::DuplicateScan(r.scan_id.clone()));
        }
        patients.entry(r.patient_id.as_str()).or_default().push(r);
    }

    let mut strata: BTreeMap<i32, Vec<&str>> = BTreeMap::new();
    for (pid, scans) in &patients {
        let labels: Vec<i32> = scans.iter().map(|r| r.label.value()).collect();
        strata.entry(patient_stratum(&labels)).or_default().push(pid);
    }

    let active: Vec<Split> = Split::ALL
        .into_iter()
        .filter(|&s| fractions.get(s) > 0.0)
        .collect();
    let sparse: Vec<i32> = strata
        .iter()
        .filter(|(_, p)| p.len() < active.len())
        .map(|(&c, _)| c)
        .collect();
    if !sparse.is_empty() {
        return Err(DatasetError::SparseClasses(sparse));
    }

    let weights: Vec<f64> = active.iter().map(|&s| fractions.get(s)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        let quotas = apportion(members.len(), &weights);
        let mut it = members.iter();
        for (split, quota) in active.iter().zip(quotas) {
            for pid in it.by_ref().take(quota) {
                for r in &patients[pid] {
                    assignment.insert(r.scan_id.clone(), *split);
                }
            }
        }
    }
    Ok(SplitAssignment(assignment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(scan: &str, patient: &str, label: i32) -> ScanRecord {
        ScanRecord {
            scan_id: scan.into(),
            patient_id: patient.into(),
            volume_path: PathBuf::from(format!("{scan}.raw")),
            label: GradeLabel::corads(label).unwrap(),
            lung_mask_path: None,
            lesion_mask_path: None,
        }
    }

    #[test]
    fn parses_five_rows_with_comments() {
        let text = "scan_id,patient_id,volume_path,scheme,label\n\
                    # leading comment\n\
                    a,p1,a.raw,corads,1\n\
                    b,p1,/abs/b.raw,corads,2\n\
                    c,p2,c.raw,CORADS,3\n\
                    d,p3,d.raw,corads,4\n\
                    e,p4,e.raw,corads,5\n";
        let recs = parse_manifest(text, Path::new("/data")).unwrap();
        assert_eq!(recs.len(), 5);
        assert_eq!(recs[0].volume_path, PathBuf::from("/data/a.raw"));
        assert_eq!(recs[1].volume_path, PathBuf::from("/abs/b.raw"));
        assert_eq!(recs[4].label.value(), 5);
    }

    #[test]
    fn illegal_label_names_the_row() {
        let text = "scan_id,patient_id,volume_path,scheme,label\n\
                    a,p1,a.raw,corads,1\n\
                    b,p2,b.raw,corads,6\n";
        match parse_manifest(text, Path::new("")) {
            Err(DatasetError::IllegalLabel { row, value, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(value, 6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        let missing_col = "scan_id,patient_id,volume_path,label\na,p,a.raw,1\n";
        assert!(matches!(
            parse_manifest(missing_col, Path::new("")),
            Err(DatasetError::Malformed { row: 1, .. })
        ));
        let short = "scan_id,patient_id,volume_path,scheme,label\na,p,a.raw,corads\n";
        assert!(matches!(
            parse_manifest(short, Path::new("")),
            Err(DatasetError::Malformed { .. })
        ));
        let not_int = "scan_id,patient_id,volume_path,scheme,label\na,p,a.raw,corads,x\n";
        assert!(matches!(
            parse_manifest(not_int, Path::new("")),
            Err(DatasetError::Malformed { row: 2, .. })
        ));
        let dup = "scan_id,patient_id,volume_path,scheme,label\na,p,a.raw,corads,1\na,p,a.raw,corads,1\n";
        assert!(matches!(
            parse_manifest(dup, Path::new("")),
            Err(DatasetError::Malformed { row: 3, .. })
        ));
    }

    #[test]
    fn missing_manifest_file() {
        assert!(matches!(
            load_manifest(Path::new("/no/such/manifest.csv")),
            Err(DatasetError::MissingFile(_))
        ));
    }

    #[test]
    fn optional_mask_columns_round_trip() {
        let base = Path::new("/d");
        let mut r = rec("a", "p", 3);
        r.volume_path = base.join("v/a.raw");
        r.lesion_mask_path = Some(base.join("m/a.lesion.raw"));
        let text = format_manifest(std::slice::from_ref(&r), base);
        assert_eq!(parse_manifest(&text, base).unwrap(), vec![r]);
    }

    fn table_manifest(scheme: &str, hist: &[(i32, usize)]) -> String {
        let mut text = String::from("scan_id,patient_id,volume_path,scheme,label\n");
        let mut i = 0;
        for &(label, n) in hist {
            for _ in 0..n {
                text.push_str(&format!("s{i},p{i},s{i}.raw,{scheme},{label}\n"));
                i += 1;
            }
        }
        text
    }

    #[test]
    fn internal_table_totals() {
        let hist = [(1, 354), (2, 105), (3, 123), (4, 65), (5, 135)];
        let recs = parse_manifest(&table_manifest("corads", &hist), Path::new("")).unwrap();
        assert_eq!(recs.len(), 782);
        let dist = class_distribution(&recs).unwrap();
        assert_eq!(dist, hist.iter().copied().collect());
        let pos = recs
            .iter()
            .filter(|r| to_binary(r.label).unwrap().value() == 1)
            .count();
        assert_eq!((782 - pos, pos), (459, 323));
    }

    #[test]
    fn external_table_totals() {
        let hist = [(0, 207), (1, 23), (2, 363), (3, 117), (4, 32)];
        let recs = parse_manifest(&table_manifest("ictcf", &hist), Path::new("")).unwrap();
        let dist = class_distribution(&recs).unwrap();
        assert_eq!(dist, hist.iter().copied().collect());
        let named: Vec<_> = dist.iter().map(|(k, v)| (ictcf::name(*k), *v)).collect();
        assert_eq!(named[0], ("Control", 207));
        assert_eq!(named[4], ("Critically ill", 32));
    }

    #[test]
    fn class_distribution_edge_cases() {
        assert!(class_distribution(&[]).unwrap().is_empty());
        let mut mixed = vec![rec("a", "p", 1)];
        mixed.push(ScanRecord {
            label: GradeLabel::new(LabelScheme::Ictcf, 0).unwrap(),
            ..rec("b", "q", 1)
        });
        assert!(matches!(
            class_distribution(&mixed),
            Err(DatasetError::MixedSchemes(_))
        ));
    }

    #[test]
    fn binary_mapping() {
        let b = |s, v| to_binary(GradeLabel::new(s, v).unwrap()).map(|l| l.value());
        assert_eq!(b(LabelScheme::Corads, 2).unwrap(), 0);
        assert_eq!(b(LabelScheme::Corads, 3).unwrap(), 1);
        assert_eq!(b(LabelScheme::Corads, 1).unwrap(), 0);
        assert_eq!(b(LabelScheme::Corads, 5).unwrap(), 1);
        assert_eq!(b(LabelScheme::Ictcf, ictcf::CONTROL).unwrap(), 0);
        assert_eq!(b(LabelScheme::Ictcf, ictcf::MILD).unwrap(), 1);
        assert_eq!(b(LabelScheme::Ictcf, ictcf::CRITICALLY_ILL).unwrap(), 1);
        assert!(matches!(
            b(LabelScheme::Binary, 1),
            Err(DatasetError::AlreadyBinary)
        ));
        assert!(matches!(
            b(LabelScheme::Ictcf, ictcf::SUSPECTED),
            Err(DatasetError::Suspected)
        ));
    }

    #[test]
    fn exact_stratification() {
        let mut recs = Vec::new();
        for i in 0..4 {
            recs.push(rec(&format!("a{i}"), &format!("pa{i}"), 1));
            recs.push(rec(&format!("b{i}"), &format!("pb{i}"), 5));
        }
        let fr = SplitFractions {
            train: 0.5,
            validation: 0.5,
            test: 0.0,
        };
        let split = stratified_patient_split(&recs, fr, 7).unwrap();
        for s in [Split::Train, Split::Validation] {
            let sel = split.select(&recs, s);
            assert_eq!(sel.iter().filter(|r| r.label.value() == 1).count(), 2);
            assert_eq!(sel.iter().filter(|r| r.label.value() == 5).count(), 2);
        }
    }

    #[test]
    fn multi_scan_patient_stays_together() {
        let mut recs = vec![rec("x1", "px", 3), rec("x2", "px", 4), rec("x3", "px", 4)];
        for i in 0..12 {
            recs.push(rec(&format!("s{i}"), &format!("p{i}"), 1 + (i % 5) as i32));
        }
        for seed in 0..20 {
            let split = stratified_patient_split(&recs, SplitFractions::default(), seed).unwrap();
            let s = split.get("x1");
            assert_eq!(split.get("x2"), s);
            assert_eq!(split.get("x3"), s);
        }
    }

    #[test]
    fn hundred_patients_within_one_of_target() {
        let recs: Vec<_> = (0..100)
            .map(|i| rec(&format!("s{i}"), &format!("p{i}"), [1, 1, 2, 3, 5, 4, 1, 5][i % 8]))
            .collect();
        let split = stratified_patient_split(&recs, SplitFractions::default(), 3).unwrap();
        for c in 1..=5 {
            let n = recs.iter().filter(|r| r.label.value() == c).count() as f64;
            let train = split
                .select(&recs, Split::Train)
                .iter()
                .filter(|r| r.label.value() == c)
                .count() as f64;
            let val = split
                .select(&recs, Split::Validation)
                .iter()
                .filter(|r| r.label.value() == c)
                .count() as f64;
            assert!((train - 0.75 * n).abs() <= 1.0, "class {c}: {train} of {n}");
            assert!((val - 0.25 * n).abs() <= 1.0, "class {c}: {val} of {n}");
        }
    }

    #[test]
    fn sparse_class_is_reported() {
        let recs = vec![rec("a", "p1", 1), rec("b", "p2", 1), rec("c", "p3", 4)];
        match stratified_patient_split(&recs, SplitFractions::default(), 0) {
            Err(DatasetError::SparseClasses(c)) => assert_eq!(c, vec![4]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_fractions() {
        let fr = SplitFractions {
            train: 0.7,
            validation: 0.2,
            test: 0.0,
        };
        assert!(matches!(
            stratified_patient_split(&[], fr, 0),
            Err(DatasetError::BadFractions(_))
        ));
    }

    #[test]
    fn stratum_majority_ties_go_high() {
        assert_eq!(patient_stratum(&[2, 4]), 4);
        assert_eq!(patient_stratum(&[2, 2, 4]), 2);
        assert_eq!(patient_stratum(&[5]), 5);
    }

    #[test]
    fn split_file_round_trip() {
        let recs: Vec<_> = (0..30)
            .map(|i| rec(&format!("s{i}"), &format!("p{}", i / 10 * 10 + i % 5), 1 + (i % 5) as i32))
            .collect();
        let fr = SplitFractions {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        };
        let split = stratified_patient_split(&recs, fr, 11).unwrap();
        assert_eq!(SplitAssignment::from_csv(&split.to_csv()).unwrap(), split);
    }

    proptest! {
        #[test]
        fn split_is_a_deterministic_patient_grouped_partition(
            labels in proptest::collection::vec((1i32..=5, 0usize..30), 30..120),
            seed in 0u64..1000,
        ) {
            let recs: Vec<_> = labels
                .iter()
                .enumerate()
                .map(|(i, &(l, p))| rec(&format!("s{i}"), &format!("p{p}"), l))
                .collect();
            let fr = SplitFractions::default();
            match stratified_patient_split(&recs, fr, seed) {
                Ok(split) => {
                    prop_assert_eq!(split.0.len(), recs.len());
                    for a in &recs {
                        for b in &recs {
                            if a.patient_id == b.patient_id {
                                prop_assert_eq!(split.get(&a.scan_id), split.get(&b.scan_id));
                            }
                        }
                    }
                    prop_assert_eq!(stratified_patient_split(&recs, fr, seed).unwrap(), split);
                }
                Err(DatasetError::SparseClasses(_)) => {}
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
