//! Network assembly: backbone, global pooling and head.

use corads_core::ordinal::{categorical_to_corads, categorical_to_positive_score, score_to_corads, sigmoid, softmax};
use corads_core::ModelInput;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::layers::{GlobalAvgPool, GlobalMaxPool, Layer, Linear, Mode, Param, Sequential};
use crate::tensor::Tensor;
use crate::{i3d, resnet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimensionality {
    #[serde(rename = "2d")]
    D2,
    #[serde(rename = "3d")]
    D3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Continuous,
    Categorical,
}

impl HeadKind {
    pub fn outputs(self) -> usize {
        match self {
            HeadKind::Continuous => 1,
            HeadKind::Categorical => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dimensionality: Dimensionality,
    /// 1 (CT) or 2 (CT + lesion map).
    pub input_channels: usize,
    pub head: HeadKind,
    /// Whether training starts from a checkpoint.
    pub pretrained: bool,
    /// Channel multiplier in (0, 1]; 1 is the reference architecture.
    pub width_scale: f64,
    /// (slices, height, width).
    pub input_geometry: [usize; 3],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dimensionality: Dimensionality::D3,
            input_channels: 2,
            head: HeadKind::Continuous,
            pretrained: true,
            width_scale: 1.0,
            input_geometry: [128, 240, 240],
        }
    }
}

impl ModelConfig {
    pub fn minimum_geometry(&self) -> [usize; 3] {
        match self.dimensionality {
            Dimensionality::D3 => i3d::TOTAL_STRIDE,
            Dimensionality::D2 => resnet::TOTAL_STRIDE,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(1..=2).contains(&self.input_channels) {
            return Err(ModelError::InvalidConfig(format!(
                "input_channels must be 1 or 2, got {}",
                self.input_channels
            )));
        }
        if !(self.width_scale > 0.0 && self.width_scale <= 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "width_scale must lie in (0, 1], got {}",
                self.width_scale
            )));
        }
        let minimum = self.minimum_geometry();
        if (0..3).any(|a| self.input_geometry[a] < minimum[a]) {
            return Err(ModelError::UnsupportedGeometry {
                geometry: self.input_geometry,
                minimum,
            });
        }
        Ok(())
    }
}

/// Per-scan network output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NetworkOutput {
    /// Sigmoid score in (0, 1).
    Continuous(f64),
    /// Softmax over CO-RADS 1..=5.
    Categorical([f64; 5]),
}

impl NetworkOutput {
    pub fn from_logits(head: HeadKind, logits: &[f64]) -> Self {
        match head {
            HeadKind::Continuous => NetworkOutput::Continuous(sigmoid(logits[0])),
            HeadKind::Categorical => {
                let p = softmax(logits);
                NetworkOutput::Categorical([p[0], p[1], p[2], p[3], p[4]])
            }
        }
    }

    pub fn head(&self) -> HeadKind {
        match self {
            NetworkOutput::Continuous(_) => HeadKind::Continuous,
            NetworkOutput::Categorical(_) => HeadKind::Categorical,
        }
    }

    pub fn raw(&self) -> Vec<f64> {
        match self {
            NetworkOutput::Continuous(s) => vec![*s],
            NetworkOutput::Categorical(p) => p.to_vec(),
        }
    }

    /// Score used for ROC analysis: the sigmoid output, or the probability
    /// mass of CO-RADS 3-5.
    pub fn positive_score(&self) -> f64 {
        match self {
            NetworkOutput::Continuous(s) => *s,
            NetworkOutput::Categorical(p) => categorical_to_positive_score(p),
        }
    }

    pub fn corads(&self) -> i32 {
        match self {
            NetworkOutput::Continuous(s) => score_to_corads(*s),
            NetworkOutput::Categorical(p) => categorical_to_corads(p),
        }
    }
}

pub struct Network {
    config: ModelConfig,
    backbone: Sequential,
    pool: Box<dyn Layer>,
    head: Linear,
}

/// Builds a freshly initialized network; `seed` drives the initialization.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Network, ModelError> {
    config.validate()?;
    let (backbone, features) = match config.dimensionality {
        Dimensionality::D3 => i3d::i3d(config.input_channels, config.width_scale),
        Dimensionality::D2 => resnet::resnet50(config.input_channels, config.width_scale),
    };
    let pool: Box<dyn Layer> = match config.dimensionality {
        Dimensionality::D3 => Box::new(GlobalAvgPool::default()),
        Dimensionality::D2 => Box::new(GlobalMaxPool::default()),
    };
    let mut net = Network {
        config: config.clone(),
        backbone,
        pool,
        head: Linear::new(features, config.head.outputs()),
    };
    net.init(seed);
    Ok(net)
}

impl Network {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.backbone.init(&mut rng);
        self.head.init(&mut rng);
    }

    /// Re-draws only the head.
    pub fn init_head(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.head.init(&mut rng);
    }

    pub fn input_shape(&self, batch: usize) -> Vec<usize> {
        let g = self.config.input_geometry;
        vec![batch, self.config.input_channels, g[0], g[1], g[2]]
    }

    /// Stacks inputs into one `[N, C, D, H, W]` tensor.
    pub fn batch_tensor(&self, batch: &[ModelInput]) -> Result<Tensor, ModelError> {
        let expected = self.input_shape(1)[1..].to_vec();
        let mut data = Vec::with_capacity(batch.len() * expected.iter().product::<usize>());
        for input in batch {
            if input.shape().to_vec() != expected {
                return Err(ModelError::GeometryMismatch {
                    expected,
                    got: input.shape().to_vec(),
                });
            }
            data.extend(input.data.iter().map(|&v| f64::from(v)));
        }
        Ok(Tensor::from_vec(&self.input_shape(batch.len()), data))
    }

    /// Pre-activation head outputs `[N, 1]` or `[N, 5]`.
    pub fn forward_logits(&mut self, x: Tensor, mode: Mode) -> Result<Tensor, ModelError> {
        let expected = self.input_shape(x.shape().first().copied().unwrap_or(0));
        if x.shape() != expected.as_slice() || expected[0] == 0 {
            return Err(ModelError::GeometryMismatch {
                expected,
                got: x.shape().to_vec(),
            });
        }
        let features = self.backbone.forward(x, mode);
        let pooled = self.pool.forward(features, mode);
        Ok(self.head.forward(pooled, mode))
    }

    /// Gradient of the loss w.r.t. the logits of the last train-mode
    /// forward; accumulates parameter gradients.
    pub fn backward(&mut self, grad_logits: Tensor) {
        let g = self.head.backward(grad_logits);
        let g = self.pool.backward(g);
        self.backbone.backward(g);
    }

    /// Inference-mode outputs, one per input.
    pub fn forward(&mut self, batch: &[ModelInput]) -> Result<Vec<NetworkOutput>, ModelError> {
        let x = self.batch_tensor(batch)?;
        let logits = self.forward_logits(x, Mode::Eval)?;
        let k = self.config.head.outputs();
        Ok(logits
            .data()
            .chunks(k)
            .map(|l| NetworkOutput::from_logits(self.config.head, l))
            .collect())
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.backbone.visit("", f);
        self.head.visit("head", f);
    }

    /// Number of trainable scalars.
    pub fn num_parameters(&mut self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, p| {
            if p.trainable {
                n += p.value.len();
            }
        });
        n
    }

    /// Every parameter and buffer by name, in visit order.
    pub fn state(&mut self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit(&mut |name, p| out.push((name.to_string(), p.value.clone())));
        out
    }

    /// Restores a [`Network::state`] snapshot of the same architecture.
    pub fn load_state(&mut self, state: &[(String, Tensor)]) -> Result<(), ModelError> {
        let mut it = state.iter();
        let mut err = None;
        self.visit(&mut |name, p| {
            if err.is_some() {
                return;
            }
            match it.next() {
                Some((n, t)) if n == name && t.shape() == p.value.shape() => p.value = t.clone(),
                Some((n, t)) if n == name => {
                    err = Some(ModelError::ShapeConflict {
                        name: name.to_string(),
                        model: p.value.shape().to_vec(),
                        checkpoint: t.shape().to_vec(),
                    })
                }
                _ => err = Some(ModelError::MissingTensor(name.to_string())),
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn zero_grad(&mut self) {
        self.visit(&mut |_, p| p.zero_grad());
    }
}
