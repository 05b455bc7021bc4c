use super::{he_normal, join, Layer, Mode, Param, Visitor};
use crate::tensor::Tensor;

/// Fully connected layer `[N, in] -> [N, out]`.
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Param::new(Tensor::zeros(&[outputs, inputs])),
            bias: Param::new(Tensor::zeros(&[outputs])),
            input: None,
        }
    }

    fn dims(&self) -> (usize, usize) {
        let s = self.weight.value.shape();
        (s[0], s[1])
    }
}

impl Layer for Linear {
    fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        let (outs, ins) = self.dims();
        let n = x.shape()[0];
        assert_eq!(x.len(), n * ins, "linear layer expects {ins} features");
        let w = self.weight.value.data();
        let mut y = Vec::with_capacity(n * outs);
        for row in x.data().chunks(ins) {
            for o in 0..outs {
                let dot: f64 = w[o * ins..(o + 1) * ins].iter().zip(row).map(|(a, b)| a * b).sum();
                y.push(dot + self.bias.value.data()[o]);
            }
        }
        if mode == Mode::Train {
            self.input = Some(x);
        }
        Tensor::from_vec(&[n, outs], y)
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let x = self.input.take().expect("linear backward without train forward");
        let (outs, ins) = self.dims();
        let n = grad.shape()[0];
        let mut dx = Tensor::zeros(x.shape());
        for i in 0..n {
            let g = &grad.data()[i * outs..(i + 1) * outs];
            let row = &x.data()[i * ins..(i + 1) * ins];
            for (o, &go) in g.iter().enumerate() {
                self.bias.grad_mut().data_mut()[o] += go;
                let dw = &mut self.weight.grad_mut().data_mut()[o * ins..(o + 1) * ins];
                for (d, xv) in dw.iter_mut().zip(row) {
                    *d += go * xv;
                }
                let w = &self.weight.value.data()[o * ins..(o + 1) * ins];
                for (d, wv) in dx.data_mut()[i * ins..(i + 1) * ins].iter_mut().zip(w) {
                    *d += go * wv;
                }
            }
        }
        dx
    }

    fn visit(&mut self, prefix: &str, f: &mut Visitor<'_>) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }

    fn init(&mut self, rng: &mut rand_chacha::ChaCha8Rng) {
        let ins = self.dims().1;
        he_normal(&mut self.weight.value, ins, 1.0, rng);
        self.bias.value.data_mut().fill(0.0);
    }
}
