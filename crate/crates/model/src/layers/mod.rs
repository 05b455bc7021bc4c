//! Layers with hand-written backward passes.
//!
//! A layer caches what its backward pass needs only in [`Mode::Train`].
//! `backward` consumes the gradient of the layer output, accumulates
//! parameter gradients and returns the gradient of the layer input. It must
//! follow a `forward` in train mode.

mod conv;
mod linear;
mod norm;
mod pool;

pub use conv::{conv3d, Conv3d, Padding};
pub use linear::Linear;
pub use norm::BatchNorm3d;
pub use pool::{GlobalAvgPool, GlobalMaxPool, MaxPool3d};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Trainable weight or persistent buffer (batch-norm running statistics).
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Option<Tensor>,
    pub trainable: bool,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        Self {
            value,
            grad: None,
            trainable: true,
        }
    }

    pub fn buffer(value: Tensor) -> Self {
        Self {
            value,
            grad: None,
            trainable: false,
        }
    }

    pub fn grad_mut(&mut self) -> &mut Tensor {
        let shape = self.value.shape().to_vec();
        self.grad.get_or_insert_with(|| Tensor::zeros(&shape))
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}

/// Fresh-layer initialization: He fan-in normal for convolutions,
/// `1/sqrt(fan_in)` normal for linear layers, zero biases.
pub fn he_normal(value: &mut Tensor, fan_in: usize, gain: f64, rng: &mut impl Rng) {
    let std = gain / (fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    for v in value.data_mut() {
        *v = normal.sample(rng);
    }
}

pub type Visitor<'a> = dyn FnMut(&str, &mut Param) + 'a;

pub trait Layer: Send {
    fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor;

    fn backward(&mut self, grad: Tensor) -> Tensor;

    /// Calls `f` with the dotted name of every parameter and buffer, in a
    /// fixed order.
    fn visit(&mut self, prefix: &str, f: &mut Visitor<'_>);

    /// Re-draws every trainable parameter.
    fn init(&mut self, rng: &mut rand_chacha::ChaCha8Rng);
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

#[derive(Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Layer for Relu {
    fn forward(&mut self, mut x: Tensor, mode: Mode) -> Tensor {
        for v in x.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        if mode == Mode::Train {
            self.mask = Some(x.data().iter().map(|&v| v > 0.0).collect());
        }
        x
    }

    fn backward(&mut self, mut grad: Tensor) -> Tensor {
        let mask = self.mask.take().expect("relu backward without train forward");
        for (g, m) in grad.data_mut().iter_mut().zip(mask) {
            if !m {
                *g = 0.0;
            }
        }
        grad
    }

    fn visit(&mut self, _: &str, _: &mut Visitor<'_>) {}

    fn init(&mut self, _: &mut rand_chacha::ChaCha8Rng) {}
}

/// Named layers applied in order.
#[derive(Default)]
pub struct Sequential {
    layers: Vec<(String, Box<dyn Layer>)>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, layer: impl Layer + 'static) {
        self.layers.push((name.into(), Box::new(layer)));
    }

    pub fn with(mut self, name: impl Into<String>, layer: impl Layer + 'static) -> Self {
        self.push(name, layer);
        self
    }
}

impl Layer for Sequential {
    fn forward(&mut self, mut x: Tensor, mode: Mode) -> Tensor {
        for (_, l) in &mut self.layers {
            x = l.forward(x, mode);
        }
        x
    }

    fn backward(&mut self, mut grad: Tensor) -> Tensor {
        for (_, l) in self.layers.iter_mut().rev() {
            grad = l.backward(grad);
        }
        grad
    }

    fn visit(&mut self, prefix: &str, f: &mut Visitor<'_>) {
        for (name, l) in &mut self.layers {
            // unnamed entries (activations) contribute no path segment
            let p = if name.is_empty() {
                prefix.to_string()
            } else {
                join(prefix, name)
            };
            l.visit(&p, f);
        }
    }

    fn init(&mut self, rng: &mut rand_chacha::ChaCha8Rng) {
        for (_, l) in &mut self.layers {
            l.init(rng);
        }
    }
}

/// Parallel branches over one input, concatenated along channels.
pub struct Concat {
    branches: Vec<(String, Box<dyn Layer>)>,
    split: Vec<usize>,
}

impl Concat {
    pub fn new(branches: Vec<(String, Box<dyn Layer>)>) -> Self {
        Self {
            branches,
            split: Vec::new(),
        }
    }
}

impl Layer for Concat {
    fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        let k = self.branches.len();
        let mut outs = Vec::with_capacity(k);
        let mut x = Some(x);
        for (i, (_, b)) in self.branches.iter_mut().enumerate() {
            let input = if i + 1 == k {
                x.take().expect("input")
            } else {
                x.as_ref().expect("input").clone()
            };
            outs.push(b.forward(input, mode));
        }
        let mut shape = outs[0].shape().to_vec();
        let (n, _, s) = outs[0].ncs();
        self.split = outs.iter().map(|o| o.shape()[1]).collect();
        let total: usize = self.split.iter().sum();
        shape[1] = total;
        let mut out = Tensor::zeros(&shape);
        let data = out.data_mut();
        for b in 0..n {
            let mut c0 = 0;
            for o in &outs {
                let c = o.shape()[1];
                data[(b * total + c0) * s..(b * total + c0 + c) * s]
                    .copy_from_slice(&o.data()[b * c * s..(b + 1) * c * s]);
                c0 += c;
            }
        }
        out
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let (n, total, s) = grad.ncs();
        let mut shape = grad.shape().to_vec();
        let mut dx: Option<Tensor> = None;
        let mut c0 = 0;
        for ((_, b), &c) in self.branches.iter_mut().zip(&self.split) {
            shape[1] = c;
            let mut part = Tensor::zeros(&shape);
            for i in 0..n {
                part.data_mut()[i * c * s..(i + 1) * c * s]
                    .copy_from_slice(&grad.data()[(i * total + c0) * s..(i * total + c0 + c) * s]);
            }
            c0 += c;
            let g = b.backward(part);
            match dx.as_mut() {
                Some(d) => d.add_assign(&g),
                None => dx = Some(g),
            }
        }
        dx.expect("at least one branch")
    }

    fn visit(&mut self, prefix: &str, f: &mut Visitor<'_>) {
        for (name, b) in &mut self.branches {
            b.visit(&join(prefix, name), f);
        }
    }

    fn init(&mut self, rng: &mut rand_chacha::ChaCha8Rng) {
        for (_, b) in &mut self.branches {
            b.init(rng);
        }
    }
}
