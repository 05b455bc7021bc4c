//! ResNet-50 (stride on the 3x3 convolution) applied slice-wise.
//!
//! Every kernel has unit depth, so slices of a `[N, C, D, H, W]` input are
//! processed independently and batch-norm statistics pool over slices.

use crate::i3d::scaled;
use crate::layers::{join, BatchNorm3d, Conv3d, Layer, MaxPool3d, Mode, Padding, Relu, Sequential, Visitor};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;

pub const TOTAL_STRIDE: [usize; 3] = [1, 32, 32];

const EXPANSION: usize = 4;

fn conv(cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Conv3d {
    Conv3d::new(
        cin,
        cout,
        [1, k, k],
        [1, stride, stride],
        Padding::Explicit([0, pad, pad]),
        false,
    )
}

pub struct Bottleneck {
    main: Sequential,
    downsample: Option<Sequential>,
    mask: Option<Vec<bool>>,
}

impl Bottleneck {
    fn new(cin: usize, width: usize, stride: usize) -> Self {
        let cout = width * EXPANSION;
        let main = Sequential::new()
            .with("conv1", conv(cin, width, 1, 1, 0))
            .with("bn1", BatchNorm3d::new(width, BN_EPS))
            .with("", Relu::default())
            .with("conv2", conv(width, width, 3, stride, 1))
            .with("bn2", BatchNorm3d::new(width, BN_EPS))
            .with("", Relu::default())
            .with("conv3", conv(width, cout, 1, 1, 0))
            .with("bn3", BatchNorm3d::new(cout, BN_EPS));
        let downsample = (stride != 1 || cin != cout).then(|| {
            Sequential::new()
                .with("0", conv(cin, cout, 1, stride, 0))
                .with("1", BatchNorm3d::new(cout, BN_EPS))
        });
        Self {
            main,
            downsample,
            mask: None,
        }
    }
}

impl Layer for Bottleneck {
    fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        let shortcut = match self.downsample.as_mut() {
            Some(d) => d.forward(x.clone(), mode),
            None => x.clone(),
        };
        let mut y = self.main.forward(x, mode);
        y.add_assign(&shortcut);
        for v in y.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        if mode == Mode::Train {
            self.mask = Some(y.data().iter().map(|&v| v > 0.0).collect());
        }
        y
    }

    fn backward(&mut self, mut grad: Tensor) -> Tensor {
        let mask = self.mask.take().expect("bottleneck backward without train forward");
        for (g, m) in grad.data_mut().iter_mut().zip(mask) {
            if !m {
                *g = 0.0;
            }
        }
        let short = match self.downsample.as_mut() {
            Some(d) => d.backward(grad.clone()),
            None => grad.clone(),
        };
        let mut dx = self.main.backward(grad);
        dx.add_assign(&short);
        dx
    }

    fn visit(&mut self, prefix: &str, f: &mut Visitor<'_>) {
        self.main.visit(prefix, f);
        if let Some(d) = self.downsample.as_mut() {
            d.visit(&join(prefix, "downsample"), f);
        }
    }

    fn init(&mut self, rng: &mut rand_chacha::ChaCha8Rng) {
        self.main.init(rng);
        if let Some(d) = self.downsample.as_mut() {
            d.init(rng);
        }
    }
}

/// Builds the backbone; returns it with its output channel count.
pub fn resnet50(input_channels: usize, width_scale: f64) -> (Sequential, usize) {
    let c = |n| scaled(n, width_scale);
    let mut net = Sequential::new()
        .with("conv1", conv(input_channels, c(64), 7, 2, 3))
        .with("bn1", BatchNorm3d::new(c(64), BN_EPS))
        .with("", Relu::default())
        .with(
            "",
            MaxPool3d::new([1, 3, 3], [1, 2, 2], Padding::Explicit([0, 1, 1])),
        );
    let mut cin = c(64);
    for (i, (planes, blocks, stride)) in [(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)]
        .into_iter()
        .enumerate()
    {
        let mut stage = Sequential::new();
        for b in 0..blocks {
            let block = Bottleneck::new(cin, c(planes), if b == 0 { stride } else { 1 });
            cin = c(planes) * EXPANSION;
            stage.push(b.to_string(), block);
        }
        net.push(format!("layer{}", i + 1), stage);
    }
    (net, cin)
}
