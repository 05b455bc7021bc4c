use super::{Layer, Mode, Padding, Visitor};
use crate::tensor::Tensor;

/// Max pooling; padded positions never win.
pub struct MaxPool3d {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: Padding,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool3d {
    pub fn new(kernel: [usize; 3], stride: [usize; 3], padding: Padding) -> Self {
        Self {
            kernel,
            stride,
            padding,
            cache: None,
        }
    }
}

impl Layer for MaxPool3d {
    fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        let [n, c, d, h, w] = x.dims5();
        let input = [d, h, w];
        let (before, after) = self.padding.resolve(input, self.kernel, self.stride);
        let mut out_dims = [0; 3];
        for a in 0..3 {
            out_dims[a] = (input[a] + before[a] + after[a] - self.kernel[a]) / self.stride[a] + 1;
        }
        let [od, oh, ow] = out_dims;
        let mut out = Tensor::zeros(&[n, c, od, oh, ow]);
        let mut arg = Vec::with_capacity(out.len());
        let src = x.data();
        let mut o = 0;
        for plane in 0..n * c {
            let base = plane * d * h * w;
            for z in 0..od {
                let z0 = (z * self.stride[0]) as isize - before[0] as isize;
                for y in 0..oh {
                    let y0 = (y * self.stride[1]) as isize - before[1] as isize;
                    for xx in 0..ow {
                        let x0 = (xx * self.stride[2]) as isize - before[2] as isize;
                        let mut best = f64::NEG_INFINITY;
                        let mut best_i = usize::MAX;
                        for a in 0..self.kernel[0] as isize {
                            let iz = z0 + a;
                            if iz < 0 || iz >= d as isize {
                                continue;
                            }
                            for b in 0..self.kernel[1] as isize {
                                let iy = y0 + b;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for e in 0..self.kernel[2] as isize {
                                    let ix = x0 + e;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let i = base + (iz as usize * h + iy as usize) * w + ix as usize;
                                    if src[i] > best || best_i == usize::MAX {
                                        best = src[i];
                                        best_i = i;
                                    }
                                }
                            }
                        }
                        out.data_mut()[o] = best;
                        arg.push(best_i);
                        o += 1;
                    }
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some((arg, x.shape().to_vec()));
        }
        out
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let (arg, shape) = self.cache.take().expect("maxpool backward without train forward");
        let mut dx = Tensor::zeros(&shape);
        for (g, &i) in grad.data().iter().zip(&arg) {
            dx.data_mut()[i] += g;
        }
        dx
    }

    fn visit(&mut self, _: &str, _: &mut Visitor<'_>) {}

    fn init(&mut self, _: &mut rand_chacha::ChaCha8Rng) {}
}

/// Mean over every non-channel axis: `[N, C, ...] -> [N, C]`.
#[derive(Default)]
pub struct GlobalAvgPool {
    shape: Option<Vec<usize>>,
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        let (n, c, s) = x.ncs();
        let data = x
            .data()
            .chunks(s)
            .map(|p| p.iter().sum::<f64>() / s as f64)
            .collect();
        if mode == Mode::Train {
            self.shape = Some(x.shape().to_vec());
        }
        Tensor::from_vec(&[n, c], data)
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let shape = self.shape.take().expect("pool backward without train forward");
        let s: usize = shape[2..].iter().product();
        let data = grad
            .data()
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g / s as f64, s))
            .collect();
        Tensor::from_vec(&shape, data)
    }

    fn visit(&mut self, _: &str, _: &mut Visitor<'_>) {}

    fn init(&mut self, _: &mut rand_chacha::ChaCha8Rng) {}
}

/// Maximum over every non-channel axis: `[N, C, ...] -> [N, C]`. On
/// `[N, C, D, H, W]` this pools slices and in-plane positions jointly.
#[derive(Default)]
pub struct GlobalMaxPool {
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl Layer for GlobalMaxPool {
    fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        let (n, c, s) = x.ncs();
        let mut arg = Vec::with_capacity(n * c);
        let data = x
            .data()
            .chunks(s)
            .enumerate()
            .map(|(plane, p)| {
                let (i, v) = p
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
                arg.push(plane * s + i);
                v
            })
            .collect();
        if mode == Mode::Train {
            self.cache = Some((arg, x.shape().to_vec()));
        }
        Tensor::from_vec(&[n, c], data)
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let (arg, shape) = self.cache.take().expect("pool backward without train forward");
        let mut dx = Tensor::zeros(&shape);
        for (g, &i) in grad.data().iter().zip(&arg) {
            dx.data_mut()[i] += g;
        }
        dx
    }

    fn visit(&mut self, _: &str, _: &mut Visitor<'_>) {}

    fn init(&mut self, _: &mut rand_chacha::ChaCha8Rng) {}
}
