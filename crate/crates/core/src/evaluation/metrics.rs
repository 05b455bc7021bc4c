use serde::{Deserialize, Serialize};

use super::EvalError;

/// K×K counts; entry `[i][j]` counts true grade `i + 1` predicted as `j + 1`.
pub fn confusion_matrix(y_true: &[i32], y_pred: &[i32], k: usize) -> Result<Vec<Vec<u64>>, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let mut m = vec![vec![0u64; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let (i, j) = (grade_index(t, k)?, grade_index(p, k)?);
        m[i][j] += 1;
    }
    Ok(m)
}

fn grade_index(grade: i32, k: usize) -> Result<usize, EvalError> {
    if grade >= 1 && grade as usize <= k {
        Ok(grade as usize - 1)
    } else {
        Err(EvalError::GradeOutOfRange { grade, k })
    }
}

/// Quadratic weighted kappa over grades `1..=k`:
/// `1 - sum(w O) / sum(w E)` with `w_ij = (i - j)^2 / (k - 1)^2` and `E` the
/// outer product of the marginals divided by `n`.
pub fn qwk(y_true: &[i32], y_pred: &[i32], k: usize) -> Result<f64, EvalError> {
    if k < 2 {
        return Err(EvalError::Invalid(format!("kappa needs k >= 2, got {k}")));
    }
    let observed = confusion_matrix(y_true, y_pred, k)?;
    let n = y_true.len();
    if n < 2 {
        return Err(EvalError::TooFew { needed: 2, got: n });
    }
    let row: Vec<f64> = observed.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col: Vec<f64> = (0..k)
        .map(|j| observed.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    if row.iter().filter(|&&c| c > 0.0).count() < 2 {
        return Err(EvalError::DegenerateMarginals);
    }
    let norm = ((k - 1) * (k - 1)) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let w = ((i as f64) - (j as f64)).powi(2) / norm;
            num += w * observed[i][j] as f64;
            den += w * row[i] * col[j] / n as f64;
        }
    }
    if den == 0.0 {
        return Err(EvalError::DegenerateMarginals);
    }
    Ok(1.0 - num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub auc: f64,
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area under the traced points.
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, p.threshold));
        }
        out
    }
}

/// ROC curve over every distinct threshold and the Mann-Whitney AUC,
/// `(wins + ties / 2) / (n_pos n_neg)`, computed from mid-ranks.
///
/// The leading (0, 0) point carries threshold `max(score) + 1`.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite(i));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // descending sweep; ranks are assigned from the bottom (rank 1 = lowest)
    let n = scores.len();
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: scores[order[0]] + 1.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let s = scores[order[i]];
        let mut j = i;
        let (mut group_pos, mut group_neg) = (0, 0);
        while j < n && scores[order[j]] == s {
            if labels[order[j]] {
                group_pos += 1;
            } else {
                group_neg += 1;
            }
            j += 1;
        }
        // positions i..j from the top are ranks n-j+1 ..= n-i from the bottom
        let mid_rank = ((n - j + 1) + (n - i)) as f64 / 2.0;
        pos_rank_sum += mid_rank * group_pos as f64;
        tp += group_pos;
        fp += group_neg;
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold: s,
        });
        i = j;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(RocCurve {
        auc: u / (n_pos as f64 * n_neg as f64),
        points,
    })
}
