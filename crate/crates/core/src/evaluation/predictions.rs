//! Predictions file: `scan_id,positive_score,corads,raw_0,...,raw_{m-1}`.
//!
//! This is also the export format for external leaderboard scoring. Floats
//! are written in shortest round-trip form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub scan_id: String,
    pub positive_score: f64,
    pub corads: i32,
    pub raw: Vec<f64>,
}

pub fn format_predictions(rows: &[PredictionRow]) -> String {
    let width = rows.iter().map(|r| r.raw.len()).max().unwrap_or(1);
    let mut out = String::from("scan_id,positive_score,corads");
    for i in 0..width {
        out.push_str(&format!(",raw_{i}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{}", r.scan_id, r.positive_score, r.corads));
        for v in &r.raw {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn parse_predictions(text: &str) -> Result<Vec<PredictionRow>, EvalError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    });
    let (_, header) = lines.next().ok_or(EvalError::BadPredictions {
        line: 1,
        msg: "empty file".into(),
    })?;
    if !header.starts_with("scan_id,positive_score,corads") {
        return Err(EvalError::BadPredictions {
            line: 1,
            msg: format!("unexpected header '{header}'"),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let bad = |msg: String| EvalError::BadPredictions { line: i + 1, msg };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(bad("expected at least 3 fields".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("'{s}' is not a number")));
        rows.push(PredictionRow {
            scan_id: fields[0].to_string(),
            positive_score: num(fields[1])?,
            corads: fields[2]
                .parse()
                .map_err(|_| bad(format!("'{}' is not a grade", fields[2])))?,
            raw: fields[3..].iter().map(|s| num(s)).collect::<Result<_, _>>()?,
        });
    }
    Ok(rows)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_predictions(&text)
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<(), EvalError> {
    crate::volume::write_atomic(path, format_predictions(rows).as_bytes()).map_err(|source| {
        EvalError::Io {
            path: path.to_path_buf(),
            source,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_garbage() {
        assert!(parse_predictions("").is_err());
        assert!(parse_predictions("a,b\n").is_err());
        let bad = "scan_id,positive_score,corads,raw_0\ns1,zero,1,0.1\n";
        assert!(matches!(
            parse_predictions(bad),
            Err(EvalError::BadPredictions { line: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip(rows in proptest::collection::vec(
            ("[a-z0-9_]{1,8}", 0.0f64..=1.0, 1i32..=5, proptest::collection::vec(-1e6f64..1e6, 1..=5)),
            0..20,
        )) {
            let rows: Vec<PredictionRow> = rows
                .into_iter()
                .map(|(scan_id, positive_score, corads, raw)| PredictionRow { scan_id, positive_score, corads, raw })
                .collect();
            prop_assert_eq!(parse_predictions(&format_predictions(&rows)).unwrap(), rows);
        }
    }
}
