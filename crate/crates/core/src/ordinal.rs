//! Ordinal treatment of CO-RADS grades.
//!
//! Grades 1..=5 map to evenly spaced regression targets in [0, 1]; a sigmoid
//! score maps back by `round(4 s) + 1`. The categorical alternative uses a
//! 5-way softmax and cross-entropy.

use thiserror::Error;

pub const NUM_GRADES: usize = 5;

#[derive(Debug, Error, PartialEq)]
#[error("CO-RADS grade {0} outside 1..=5")]
pub struct GradeOutOfRange(pub i32);

/// Regression target of a grade: `(c - 1) / 4`.
pub fn corads_to_target(grade: i32) -> Result<f64, GradeOutOfRange> {
    if !(1..=5).contains(&grade) {
        return Err(GradeOutOfRange(grade));
    }
    Ok(f64::from(grade - 1) / 4.0)
}

/// Grade of a score in [0, 1]: `round(4 s) + 1` with halves rounded up.
/// Scores outside [0, 1] saturate at grade 1 or 5.
pub fn score_to_corads(score: f64) -> i32 {
    let s = score.clamp(0.0, 1.0);
    // 4 s is exact and non-negative, so round() is half-up without the
    // extra rounding of `floor(4 s + 0.5)`
    ((4.0 * s).round() as i32 + 1).clamp(1, 5)
}

/// Binary cross-entropy of a score against a soft target.
pub fn continuous_loss(score: f64, target: f64) -> f64 {
    -(target * score.ln() + (1.0 - target) * (1.0 - score).ln())
}

/// Numerically stable BCE evaluated on the pre-sigmoid logit, with its
/// derivative w.r.t. the logit (`sigmoid(z) - t`).
pub fn continuous_loss_from_logit(logit: f64, target: f64) -> (f64, f64) {
    // -t ln s - (1-t) ln(1-s) = softplus(z) - t z
    let softplus = logit.max(0.0) + (-logit.abs()).exp().ln_1p();
    (softplus - target * logit, sigmoid(logit) - target)
}

/// Cross-entropy of a probability vector for grade `c` (1-based).
pub fn categorical_loss(probs: &[f64], grade: i32) -> Result<f64, GradeOutOfRange> {
    let idx = grade_index(grade)?;
    Ok(-probs[idx].ln())
}

/// Cross-entropy from logits and its gradient (`softmax(z) - onehot`).
pub fn categorical_loss_from_logits(
    logits: &[f64],
    grade: i32,
) -> Result<(f64, Vec<f64>), GradeOutOfRange> {
    let idx = grade_index(grade)?;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let mut grad: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
    grad[idx] -= 1.0;
    Ok((lse - logits[idx], grad))
}

/// Probability mass on the positive grades 3, 4 and 5.
pub fn categorical_to_positive_score(probs: &[f64]) -> f64 {
    probs[2..NUM_GRADES].iter().sum()
}

/// Most probable grade; ties go to the higher grade.
pub fn categorical_to_corads(probs: &[f64]) -> i32 {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().take(NUM_GRADES) {
        if p >= probs[best] {
            best = i;
        }
    }
    best as i32 + 1
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn grade_index(grade: i32) -> Result<usize, GradeOutOfRange> {
    if (1..=5).contains(&grade) {
        Ok(grade as usize - 1)
    } else {
        Err(GradeOutOfRange(grade))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn targets() {
        assert_eq!(corads_to_target(1), Ok(0.0));
        assert_eq!(corads_to_target(2), Ok(0.25));
        assert_eq!(corads_to_target(3), Ok(0.5));
        assert_eq!(corads_to_target(5), Ok(1.0));
        assert_eq!(corads_to_target(0), Err(GradeOutOfRange(0)));
        assert_eq!(corads_to_target(6), Err(GradeOutOfRange(6)));
    }

    #[test]
    fn scores_to_grades() {
        assert_eq!(score_to_corads(0.62), 3);
        assert_eq!(score_to_corads(0.125), 2);
        assert_eq!(score_to_corads(0.0), 1);
        assert_eq!(score_to_corads(1.0), 5);
        for c in 1..=5 {
            assert_eq!(score_to_corads(corads_to_target(c).unwrap()), c);
        }
        for (b, above) in [(0.125, 2), (0.375, 3), (0.625, 4), (0.875, 5)] {
            assert_eq!(score_to_corads(b), above);
            assert_eq!(score_to_corads(b - 1e-12), above - 1);
            assert_eq!(score_to_corads(b.next_down()), above - 1);
        }
    }

    #[test]
    fn bce_values() {
        assert!((continuous_loss(0.5, 0.5) - std::f64::consts::LN_2).abs() < 1e-15);
        let (l, g) = continuous_loss_from_logit(0.0, 0.5);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, 0.0);
    }

    #[test]
    fn bce_grows_with_distance_from_target() {
        // dense grid scan on each side of t = 0.75
        let t = 0.75;
        let grid: Vec<f64> = (1..10_000).map(|i| i as f64 / 10_000.0).collect();
        for w in grid.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a >= t {
                assert!(continuous_loss(b, t) > continuous_loss(a, t), "s={b}");
            } else if b <= t {
                assert!(continuous_loss(a, t) > continuous_loss(b, t), "s={a}");
            }
        }
        assert!(continuous_loss(0.9, t) < continuous_loss(0.95, t));
    }

    #[test]
    fn categorical_values() {
        let one_hot = [0.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(categorical_loss(&one_hot, 3).unwrap(), 0.0);
        let uniform = [0.2; 5];
        assert!((categorical_loss(&uniform, 4).unwrap() - 5f64.ln()).abs() < 1e-15);
        let a = [0.1, 0.2, 0.3, 0.15, 0.25];
        let b = [0.25, 0.15, 0.3, 0.2, 0.1];
        assert_eq!(categorical_loss(&a, 3), categorical_loss(&b, 3));
        assert!(categorical_loss(&a, 7).is_err());
    }

    #[test]
    fn positive_mass() {
        assert_eq!(categorical_to_positive_score(&[0.0, 0.0, 0.0, 0.0, 1.0]), 1.0);
        assert_eq!(categorical_to_positive_score(&[1.0, 0.0, 0.0, 0.0, 0.0]), 0.0);
        assert!((categorical_to_positive_score(&[0.2; 5]) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_go_high() {
        assert_eq!(categorical_to_corads(&[0.2; 5]), 5);
        assert_eq!(categorical_to_corads(&[0.4, 0.4, 0.2, 0.0, 0.0]), 2);
        assert_eq!(categorical_to_corads(&[0.0, 0.0, 0.0, 1.0, 0.0]), 4);
    }

    proptest! {
        #[test]
        fn bce_minimum_is_at_target(s in 0.001f64..0.999, t in 0.0f64..=1.0) {
            let at_t = if t == 0.0 || t == 1.0 { 0.0 } else { continuous_loss(t, t) };
            prop_assert!(continuous_loss(s, t) >= at_t - 1e-12);
        }

        #[test]
        fn grade_is_nearest_target(s in 0.0f64..=1.0) {
            let c = score_to_corads(s);
            let d = (s - corads_to_target(c).unwrap()).abs();
            for other in 1..=5 {
                let e = (s - corads_to_target(other).unwrap()).abs();
                prop_assert!(d < e || (d == e && c > other) || other == c);
            }
        }

        #[test]
        fn logit_forms_agree(z in -20f64..20.0, t in 0.0f64..=1.0) {
            let (l, g) = continuous_loss_from_logit(z, t);
            let s = sigmoid(z);
            if s > 1e-6 && s < 1.0 - 1e-6 {
                prop_assert!((l - continuous_loss(s, t)).abs() < 1e-7 * (1.0 + l.abs()));
            }
            prop_assert!((g - (s - t)).abs() < 1e-15);
        }

        #[test]
        fn categorical_logit_form_agrees(z in proptest::array::uniform5(-10f64..10.0), c in 1i32..=5) {
            let (l, g) = categorical_loss_from_logits(&z, c).unwrap();
            let p = softmax(&z);
            prop_assert!((l - categorical_loss(&p, c).unwrap()).abs() < 1e-9);
            prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
