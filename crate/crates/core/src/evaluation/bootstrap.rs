//! Non-parametric bootstrap: percentile confidence intervals and paired
//! significance tests.
//!
//! Iteration `i` draws from its own ChaCha stream (`seed`, stream `i`), so
//! results do not depend on how iterations are scheduled across threads.
//! Draws on which the metric is undefined (e.g. a single-class resample for
//! AUC) are redrawn from the same stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{qwk, roc_auc};
use super::EvalError;

/// Redraw budget of a single iteration before the sample is declared
/// degenerate.
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub n_iter: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_iter: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    TwoSided,
    /// Alternative: the first metric exceeds the second.
    OneSided,
}

/// Runs `statistic` on `n_iter` resamples of `0..n`. Returns the values and
/// the number of redrawn (undefined) draws.
fn resample<F>(n: usize, config: BootstrapConfig, statistic: F) -> Result<Vec<f64>, EvalError>
where
    F: Fn(&[usize]) -> Result<f64, EvalError> + Sync,
{
    if n == 0 || config.n_iter == 0 {
        return Err(EvalError::TooFew { needed: 1, got: n.min(config.n_iter) });
    }
    let outcomes: Vec<Result<(f64, usize), EvalError>> = (0..config.n_iter)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let mut idx = vec![0usize; n];
            for failed in 0..MAX_REDRAWS {
                for v in idx.iter_mut() {
                    *v = rng.random_range(0..n);
                }
                match statistic(&idx) {
                    Ok(v) => return Ok((v, failed)),
                    Err(e) if e.is_undefined() => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(EvalError::DegenerateSample {
                failed: MAX_REDRAWS,
                total: MAX_REDRAWS,
            })
        })
        .collect();
    let mut values = Vec::with_capacity(config.n_iter);
    let mut failed = 0;
    for o in outcomes {
        match o {
            Ok((v, f)) => {
                values.push(v);
                failed += f;
            }
            Err(EvalError::DegenerateSample { .. }) => {
                return Err(EvalError::DegenerateSample {
                    failed: failed + MAX_REDRAWS,
                    total: failed + MAX_REDRAWS + values.len(),
                })
            }
            Err(e) => return Err(e),
        }
    }
    let total = failed + values.len();
    if failed * 2 > total {
        return Err(EvalError::DegenerateSample { failed, total });
    }
    Ok(values)
}

/// Linear-interpolated percentile (`q` in [0, 1]) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    }
}

/// 95% percentile interval of `metric` over bootstrap resamples of `n`
/// scans. `metric` receives the resampled scan indices.
pub fn bootstrap_ci<F>(n: usize, metric: F, config: BootstrapConfig) -> Result<(f64, f64), EvalError>
where
    F: Fn(&[usize]) -> Result<f64, EvalError> + Sync,
{
    // the metric must be defined on the full sample
    let all: Vec<usize> = (0..n).collect();
    metric(&all)?;
    let values = resample(n, config, metric)?;
    Ok((percentile(&values, 0.025), percentile(&values, 0.975)))
}

/// Paired bootstrap test of `metric_a - metric_b`; `difference` receives
/// the jointly resampled scan indices.
///
/// Two-sided: `p = 2 min(P(d <= 0), P(d >= 0))`; one-sided: `p = P(d <= 0)`.
/// Clamped to `[1 / n_iter, 1]`.
pub fn bootstrap_significance<F>(
    n: usize,
    difference: F,
    config: BootstrapConfig,
    sidedness: Sidedness,
) -> Result<f64, EvalError>
where
    F: Fn(&[usize]) -> Result<f64, EvalError> + Sync,
{
    let all: Vec<usize> = (0..n).collect();
    difference(&all)?;
    let d = resample(n, config, difference)?;
    let total = d.len() as f64;
    let le = d.iter().filter(|&&x| x <= 0.0).count() as f64 / total;
    let ge = d.iter().filter(|&&x| x >= 0.0).count() as f64 / total;
    let p = match sidedness {
        Sidedness::TwoSided => 2.0 * le.min(ge),
        Sidedness::OneSided => le,
    };
    Ok(p.clamp(1.0 / config.n_iter as f64, 1.0))
}

fn gather<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

pub fn auc_ci(scores: &[f64], labels: &[bool], config: BootstrapConfig) -> Result<(f64, f64), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    bootstrap_ci(
        scores.len(),
        |idx| Ok(roc_auc(&gather(scores, idx), &gather(labels, idx))?.auc),
        config,
    )
}

pub fn qwk_ci(y_true: &[i32], y_pred: &[i32], config: BootstrapConfig) -> Result<(f64, f64), EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    bootstrap_ci(
        y_true.len(),
        |idx| qwk(&gather(y_true, idx), &gather(y_pred, idx), 5),
        config,
    )
}

pub fn auc_significance(
    scores_a: &[f64],
    scores_b: &[f64],
    labels: &[bool],
    config: BootstrapConfig,
    sidedness: Sidedness,
) -> Result<f64, EvalError> {
    if scores_a.len() != labels.len() || scores_b.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores_a.len(), scores_b.len()));
    }
    bootstrap_significance(
        labels.len(),
        |idx| {
            let l = gather(labels, idx);
            Ok(roc_auc(&gather(scores_a, idx), &l)?.auc - roc_auc(&gather(scores_b, idx), &l)?.auc)
        },
        config,
        sidedness,
    )
}

pub fn qwk_significance(
    pred_a: &[i32],
    pred_b: &[i32],
    y_true: &[i32],
    config: BootstrapConfig,
    sidedness: Sidedness,
) -> Result<f64, EvalError> {
    if pred_a.len() != y_true.len() || pred_b.len() != y_true.len() {
        return Err(EvalError::LengthMismatch(pred_a.len(), pred_b.len()));
    }
    bootstrap_significance(
        y_true.len(),
        |idx| {
            let t = gather(y_true, idx);
            Ok(qwk(&t, &gather(pred_a, idx), 5)? - qwk(&t, &gather(pred_b, idx), 5)?)
        },
        config,
        sidedness,
    )
}
