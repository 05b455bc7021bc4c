//! Training and inference around the CO-RADS networks.
//!
//! All randomness of a run flows from one seed through named sub-streams,
//! so sampling, augmentation and initialization never perturb each other.

pub mod augment;
pub mod inference;
pub mod sampler;
pub mod training;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use augment::{augment, AugmentConfig, ElasticConfig};
pub use inference::{ensemble_predict, member_seed, predict, predict_scan, Ensemble, InferenceError, ScanPrediction};
pub use sampler::{balanced_batch_stream, BatchSampler, SamplerError};
pub use training::{
    train, Balance, EarlyStopper, EvalRecord, StopDecision, StopReason, TrainConfig, TrainError, TrainHistory,
    TrainOutcome, TrainSample,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Sampling = 2,
    Augmentation = 3,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Weight-initialization seed of a run.
pub fn init_seed(seed: u64) -> u64 {
    substream(seed, Stream::Init).random()
}
