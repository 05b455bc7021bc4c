//! Training loop with validation-QWK early stopping.

use corads_core::evaluation::qwk;
use corads_core::ordinal::{categorical_loss_from_logits, continuous_loss_from_logit, corads_to_target, NUM_GRADES};
use corads_core::ModelInput;
use corads_model::{Adam, AdamConfig, HeadKind, Mode, ModelError, Network, NetworkOutput, Tensor};
use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{augment, AugmentConfig};
use crate::sampler::{BatchSampler, SamplerError};
use crate::{substream, Stream};

/// Where class balancing applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Balance {
    /// Training batches are drawn class-uniformly.
    Train,
    /// The stopping QWK is computed on a class-balanced validation set.
    Validation,
    Both,
}

impl Balance {
    fn sampler(self) -> bool {
        matches!(self, Balance::Train | Balance::Both)
    }

    fn monitor(self) -> bool {
        matches!(self, Balance::Validation | Balance::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    /// Counted in training batches.
    pub patience_batches: usize,
    pub eval_every_batches: usize,
    pub max_batches: usize,
    pub seed: u64,
    pub augmentation: AugmentConfig,
    pub balance: Balance,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            batch_size: 2,
            patience_batches: 10_000,
            eval_every_batches: 500,
            max_batches: 100_000,
            seed: 0,
            augmentation: AugmentConfig::default(),
            balance: Balance::Train,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.eval_every_batches == 0 || self.max_batches == 0 {
            return bad("batch_size, eval_every_batches and max_batches must be positive");
        }
        Ok(())
    }
}

/// A preprocessed scan with its CO-RADS grade.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub scan_id: String,
    pub input: ModelInput,
    pub grade: i32,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss {loss} at batch {batch} (learning rate {learning_rate})")]
    NonFinite {
        batch: usize,
        loss: f64,
        learning_rate: f64,
    },
    #[error("validation set is unusable: {0}")]
    Validation(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Batches trained when the evaluation ran.
    pub batch: usize,
    /// `None` when kappa is undefined on the predictions.
    pub val_qwk: Option<f64>,
    pub val_loss: f64,
    /// Mean training loss since the previous evaluation.
    pub train_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxBatches,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub evaluations: Vec<EvalRecord>,
    /// Per-batch training loss.
    pub losses: Vec<f64>,
    /// Index into `evaluations` of the returned weights.
    pub best: Option<usize>,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn best_qwk(&self) -> Option<f64> {
        self.best.and_then(|i| self.evaluations[i].val_qwk)
    }
}

pub struct TrainOutcome {
    pub history: TrainHistory,
    /// Weights at the best validation QWK (final weights if never evaluated).
    pub best_state: Vec<(String, Tensor)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience rule: stop once `patience_batches` have passed since the best
/// QWK. Only a strictly higher QWK counts as improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    pub patience_batches: usize,
    best: Option<(f64, usize)>,
    start: usize,
}

impl EarlyStopper {
    pub fn new(patience_batches: usize) -> Self {
        Self {
            patience_batches,
            best: None,
            start: 0,
        }
    }

    pub fn best(&self) -> Option<(f64, usize)> {
        self.best
    }

    pub fn observe(&mut self, batch: usize, qwk: Option<f64>) -> StopDecision {
        if let Some(q) = qwk.filter(|q| q.is_finite()) {
            if self.best.is_none_or(|(b, _)| q > b) {
                self.best = Some((q, batch));
                return StopDecision::Improved;
            }
        }
        let since = self.best.map_or(self.start, |(_, b)| b);
        if batch - since >= self.patience_batches {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

/// Mean loss of a batch and its gradient w.r.t. the logits.
fn batch_loss(head: HeadKind, logits: &Tensor, grades: &[i32]) -> (f64, Tensor) {
    let k = head.outputs();
    let n = grades.len() as f64;
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = 0.0;
    for (i, &g) in grades.iter().enumerate() {
        let row = &logits.data()[i * k..(i + 1) * k];
        match head {
            HeadKind::Continuous => {
                let t = corads_to_target(g).expect("validated grade");
                let (l, d) = continuous_loss_from_logit(row[0], t);
                total += l;
                grad.data_mut()[i] = d / n;
            }
            HeadKind::Categorical => {
                let (l, d) = categorical_loss_from_logits(row, g).expect("validated grade");
                total += l;
                for (j, v) in d.into_iter().enumerate() {
                    grad.data_mut()[i * k + j] = v / n;
                }
            }
        }
    }
    (total / n, grad)
}

fn output_loss(out: &NetworkOutput, grade: i32) -> f64 {
    match out {
        NetworkOutput::Continuous(s) => {
            corads_core::ordinal::continuous_loss(s.clamp(1e-12, 1.0 - 1e-12), corads_to_target(grade).expect("grade"))
        }
        NetworkOutput::Categorical(p) => -p[(grade - 1) as usize].max(1e-300).ln(),
    }
}

/// Indices of a class-balanced view: each class cycled up to the size of
/// the largest one.
fn balanced_view(grades: &[i32]) -> Vec<usize> {
    let mut by_class = vec![Vec::new(); NUM_GRADES];
    for (i, &g) in grades.iter().enumerate() {
        by_class[(g - 1) as usize].push(i);
    }
    let target = by_class.iter().map(Vec::len).max().unwrap_or(0);
    by_class
        .iter()
        .filter(|c| !c.is_empty())
        .flat_map(|c| (0..target).map(move |i| c[i % c.len()]))
        .collect()
}

/// Scores `samples` in inference mode; returns (QWK, mean loss).
pub fn evaluate(
    net: &mut Network,
    samples: &[TrainSample],
    balanced: bool,
    batch_size: usize,
) -> Result<(Option<f64>, f64), TrainError> {
    let mut outputs = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let inputs: Vec<ModelInput> = chunk.iter().map(|s| s.input.clone()).collect();
        outputs.extend(net.forward(&inputs)?);
    }
    let grades: Vec<i32> = samples.iter().map(|s| s.grade).collect();
    let view: Vec<usize> = if balanced {
        balanced_view(&grades)
    } else {
        (0..samples.len()).collect()
    };
    let truth: Vec<i32> = view.iter().map(|&i| grades[i]).collect();
    let pred: Vec<i32> = view.iter().map(|&i| outputs[i].corads()).collect();
    let kappa = qwk(&truth, &pred, NUM_GRADES).ok();
    let loss = view.iter().map(|&i| output_loss(&outputs[i], grades[i])).sum::<f64>() / view.len() as f64;
    Ok((kappa, loss))
}

/// Trains `net` in place and returns the history with the best weights.
/// The network is left holding the best weights.
pub fn train(
    net: &mut Network,
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let grades: Vec<i32> = train_set.iter().map(|s| s.grade).collect();
    let mut sampler = BatchSampler::new(&grades, config.batch_size, config.seed, config.balance.sampler())?;
    if val_set.is_empty() {
        return Err(TrainError::Validation("no validation scans".into()));
    }
    if let Some(bad) = val_set.iter().find(|s| !(1..=NUM_GRADES as i32).contains(&s.grade)) {
        return Err(TrainError::Validation(format!("{} has grade {}", bad.scan_id, bad.grade)));
    }
    let mut aug_rng = substream(config.seed, Stream::Augmentation);
    let mut adam = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        beta1: config.adam_beta1,
        beta2: config.adam_beta2,
        ..AdamConfig::default()
    });
    let head = net.config().head;
    let mut stopper = EarlyStopper::new(config.patience_batches);
    let mut history = TrainHistory {
        evaluations: Vec::new(),
        losses: Vec::new(),
        best: None,
        stop_reason: StopReason::MaxBatches,
    };
    let mut best_state = None;
    let mut since_eval = Vec::new();
    for batch in 1..=config.max_batches {
        let idx = sampler.next().expect("infinite stream");
        let inputs: Vec<ModelInput> = idx
            .iter()
            .map(|&i| augment(&train_set[i].input, &config.augmentation, &mut aug_rng))
            .collect();
        let batch_grades: Vec<i32> = idx.iter().map(|&i| grades[i]).collect();
        let x = net.batch_tensor(&inputs)?;
        let logits = net.forward_logits(x, Mode::Train)?;
        let (loss, grad) = batch_loss(head, &logits, &batch_grades);
        if !loss.is_finite() {
            return Err(TrainError::NonFinite {
                batch,
                loss,
                learning_rate: config.learning_rate,
            });
        }
        net.backward(grad);
        adam.step(net);
        history.losses.push(loss);
        since_eval.push(loss);

        if batch % config.eval_every_batches == 0 {
            let (kappa, val_loss) = evaluate(net, val_set, config.balance.monitor(), config.batch_size)?;
            let record = EvalRecord {
                batch,
                val_qwk: kappa,
                val_loss,
                train_loss: since_eval.iter().sum::<f64>() / since_eval.len() as f64,
            };
            since_eval.clear();
            info!(
                "batch {batch}: train loss {:.4}, val loss {val_loss:.4}, val qwk {}",
                record.train_loss,
                kappa.map_or("undefined".to_string(), |k| format!("{k:.4}"))
            );
            history.evaluations.push(record);
            match stopper.observe(batch, kappa) {
                StopDecision::Improved => {
                    history.best = Some(history.evaluations.len() - 1);
                    best_state = Some(net.state());
                }
                StopDecision::Continue => {}
                StopDecision::Stop => {
                    history.stop_reason = StopReason::Patience;
                    break;
                }
            }
        }
    }
    let best_state = match best_state {
        Some(s) => {
            net.load_state(&s)?;
            s
        }
        None => net.state(),
    };
    Ok(TrainOutcome { history, best_state })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopper_on_injected_sequence() {
        // evaluations every 100 batches, patience of two evaluations
        let mut s = EarlyStopper::new(200);
        let seq = [0.2, 0.5, 0.4, 0.4, 0.9];
        let mut decisions = Vec::new();
        for (i, q) in seq.iter().enumerate() {
            let d = s.observe((i + 1) * 100, Some(*q));
            decisions.push(d);
            if d == StopDecision::Stop {
                break;
            }
        }
        assert_eq!(
            decisions,
            [
                StopDecision::Improved,
                StopDecision::Improved,
                StopDecision::Continue,
                StopDecision::Stop
            ]
        );
        assert_eq!(s.best(), Some((0.5, 200)));
    }

    #[test]
    fn ties_and_undefined_do_not_improve() {
        let mut s = EarlyStopper::new(1000);
        assert_eq!(s.observe(1, None), StopDecision::Continue);
        assert_eq!(s.observe(2, Some(0.3)), StopDecision::Improved);
        assert_eq!(s.observe(3, Some(0.3)), StopDecision::Continue);
        assert_eq!(s.observe(4, Some(f64::NAN)), StopDecision::Continue);
        assert_eq!(s.best(), Some((0.3, 2)));
    }

    #[test]
    fn balanced_view_equalizes() {
        let v = balanced_view(&[1, 1, 1, 1, 3, 5, 5]);
        assert_eq!(v, vec![0, 1, 2, 3, 4, 4, 4, 4, 5, 6, 5, 6]);
    }

    #[test]
    fn loss_gradient_is_batch_mean() {
        let logits = Tensor::from_vec(&[2, 1], vec![0.0, 0.0]);
        let (l, g) = batch_loss(HeadKind::Continuous, &logits, &[1, 5]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(g.data(), &[0.25, -0.25]);
    }
}
