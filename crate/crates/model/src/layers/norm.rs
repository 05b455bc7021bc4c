use super::{join, Layer, Mode, Param, Visitor};
use crate::tensor::Tensor;

/// Per-channel batch normalization over `[N, C, ...]`. Running variance is
/// tracked unbiased, normalization uses the biased batch variance.
pub struct BatchNorm3d {
    pub weight: Param,
    pub bias: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<(Tensor, Vec<f64>)>,
}

impl BatchNorm3d {
    pub fn new(channels: usize, eps: f64) -> Self {
        Self {
            weight: Param::new(Tensor::filled(&[channels], 1.0)),
            bias: Param::new(Tensor::zeros(&[channels])),
            running_mean: Param::buffer(Tensor::zeros(&[channels])),
            running_var: Param::buffer(Tensor::filled(&[channels], 1.0)),
            eps,
            momentum: 0.1,
            cache: None,
        }
    }
}

impl Layer for BatchNorm3d {
    fn forward(&mut self, mut x: Tensor, mode: Mode) -> Tensor {
        let (n, c, s) = x.ncs();
        let m = (n * s) as f64;
        let mut inv_std = vec![0.0; c];
        let train = mode == Mode::Train;
        for ch in 0..c {
            let (mean, var) = if train {
                let mut sum = 0.0;
                for i in 0..n {
                    sum += x.data()[(i * c + ch) * s..(i * c + ch + 1) * s].iter().sum::<f64>();
                }
                let mean = sum / m;
                let mut sq = 0.0;
                for i in 0..n {
                    sq += x.data()[(i * c + ch) * s..(i * c + ch + 1) * s]
                        .iter()
                        .map(|v| (v - mean) * (v - mean))
                        .sum::<f64>();
                }
                let var = sq / m;
                let unbiased = if m > 1.0 { sq / (m - 1.0) } else { var };
                let mo = self.momentum;
                let rm = &mut self.running_mean.value.data_mut()[ch];
                *rm = (1.0 - mo) * *rm + mo * mean;
                let rv = &mut self.running_var.value.data_mut()[ch];
                *rv = (1.0 - mo) * *rv + mo * unbiased;
                (mean, var)
            } else {
                (
                    self.running_mean.value.data()[ch],
                    self.running_var.value.data()[ch],
                )
            };
            inv_std[ch] = 1.0 / (var + self.eps).sqrt();
            for i in 0..n {
                for v in &mut x.data_mut()[(i * c + ch) * s..(i * c + ch + 1) * s] {
                    *v = (*v - mean) * inv_std[ch];
                }
            }
        }
        let xhat = if train { Some(x.clone()) } else { None };
        for ch in 0..c {
            let (g, b) = (self.weight.value.data()[ch], self.bias.value.data()[ch]);
            for i in 0..n {
                for v in &mut x.data_mut()[(i * c + ch) * s..(i * c + ch + 1) * s] {
                    *v = g * *v + b;
                }
            }
        }
        if let Some(xhat) = xhat {
            self.cache = Some((xhat, inv_std));
        }
        x
    }

    fn backward(&mut self, mut grad: Tensor) -> Tensor {
        let (xhat, inv_std) = self.cache.take().expect("batchnorm backward without train forward");
        let (n, c, s) = grad.ncs();
        let m = (n * s) as f64;
        for ch in 0..c {
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for i in 0..n {
                let r = (i * c + ch) * s..(i * c + ch + 1) * s;
                for (g, xh) in grad.data()[r.clone()].iter().zip(&xhat.data()[r]) {
                    sum_g += g;
                    sum_gx += g * xh;
                }
            }
            self.bias.grad_mut().data_mut()[ch] += sum_g;
            self.weight.grad_mut().data_mut()[ch] += sum_gx;
            let gamma = self.weight.value.data()[ch];
            let k = gamma * inv_std[ch];
            for i in 0..n {
                let r = (i * c + ch) * s..(i * c + ch + 1) * s;
                let xh = &xhat.data()[r.clone()];
                for (g, x) in grad.data_mut()[r].iter_mut().zip(xh) {
                    *g = k * (*g - sum_g / m - x * sum_gx / m);
                }
            }
        }
        grad
    }

    fn visit(&mut self, prefix: &str, f: &mut Visitor<'_>) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }

    fn init(&mut self, _: &mut rand_chacha::ChaCha8Rng) {
        self.weight.value.data_mut().fill(1.0);
        self.bias.value.data_mut().fill(0.0);
        self.running_mean.value.data_mut().fill(0.0);
        self.running_var.value.data_mut().fill(1.0);
    }
}
