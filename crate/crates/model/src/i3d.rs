//! Inflated Inception-V1 (I3D) backbone.
//!
//! Depth plays the role of the temporal axis of the video network. Layer
//! table (TF "SAME" padding throughout, channel counts before width scaling):
//!
//! | block          | kernel / stride        | output channels                         |
//! |----------------|------------------------|-----------------------------------------|
//! | Conv3d_1a_7x7  | 7x7x7 / 2,2,2          | 64                                      |
//! | MaxPool3d_2a   | 1x3x3 / 1,2,2          |                                         |
//! | Conv3d_2b_1x1  | 1x1x1 / 1              | 64                                      |
//! | Conv3d_2c_3x3  | 3x3x3 / 1              | 192                                     |
//! | MaxPool3d_3a   | 1x3x3 / 1,2,2          |                                         |
//! | Mixed_3b, 3c   | inception              | 256, 480                                |
//! | MaxPool3d_4a   | 3x3x3 / 2,2,2          |                                         |
//! | Mixed_4b .. 4f | inception              | 512, 512, 512, 528, 832                 |
//! | MaxPool3d_5a   | 2x2x2 / 2,2,2          |                                         |
//! | Mixed_5b, 5c   | inception              | 832, 1024                               |
//!
//! Each inception block concatenates a 1x1x1 branch, two 1x1x1 -> 3x3x3
//! branches and a 3x3x3 max-pool -> 1x1x1 branch.

use crate::layers::{BatchNorm3d, Concat, Conv3d, Layer, MaxPool3d, Padding, Relu, Sequential};

pub const BN_EPS: f64 = 1e-3;

/// Total stride of the backbone per axis (depth, height, width).
pub const TOTAL_STRIDE: [usize; 3] = [8, 32, 32];

/// `(b0, [b1a, b1b], [b2a, b2b], b3)` channel counts of each mixed block.
const MIXED: [(&str, usize, [usize; 2], [usize; 2], usize); 9] = [
    ("Mixed_3b", 64, [96, 128], [16, 32], 32),
    ("Mixed_3c", 128, [128, 192], [32, 96], 64),
    ("Mixed_4b", 192, [96, 208], [16, 48], 64),
    ("Mixed_4c", 160, [112, 224], [24, 64], 64),
    ("Mixed_4d", 128, [128, 256], [24, 64], 64),
    ("Mixed_4e", 112, [144, 288], [32, 64], 64),
    ("Mixed_4f", 256, [160, 320], [32, 128], 128),
    ("Mixed_5b", 256, [160, 320], [32, 128], 128),
    ("Mixed_5c", 384, [192, 384], [48, 128], 128),
];

pub fn scaled(channels: usize, width_scale: f64) -> usize {
    ((channels as f64 * width_scale).round() as usize).max(1)
}

/// Convolution + batch norm + ReLU.
pub fn unit(cin: usize, cout: usize, kernel: [usize; 3], stride: [usize; 3]) -> Sequential {
    Sequential::new()
        .with("conv", Conv3d::new(cin, cout, kernel, stride, Padding::Same, false))
        .with("bn", BatchNorm3d::new(cout, BN_EPS))
        .with("", Relu::default())
}

fn mixed(cin: usize, b0: usize, b1: [usize; 2], b2: [usize; 2], b3: usize) -> Concat {
    let branch = |layers: Vec<(&str, Sequential)>| {
        let mut s = Sequential::new();
        for (name, l) in layers {
            s.push(name, l);
        }
        s
    };
    let pool = Sequential::new().with("", MaxPool3d::new([3, 3, 3], [1, 1, 1], Padding::Same));
    let branches: Vec<(String, Box<dyn Layer>)> = vec![
        (
            "Branch_0".into(),
            Box::new(branch(vec![("Conv3d_0a_1x1", unit(cin, b0, [1, 1, 1], [1, 1, 1]))])),
        ),
        (
            "Branch_1".into(),
            Box::new(branch(vec![
                ("Conv3d_0a_1x1", unit(cin, b1[0], [1, 1, 1], [1, 1, 1])),
                ("Conv3d_0b_3x3", unit(b1[0], b1[1], [3, 3, 3], [1, 1, 1])),
            ])),
        ),
        (
            "Branch_2".into(),
            Box::new(branch(vec![
                ("Conv3d_0a_1x1", unit(cin, b2[0], [1, 1, 1], [1, 1, 1])),
                ("Conv3d_0b_3x3", unit(b2[0], b2[1], [3, 3, 3], [1, 1, 1])),
            ])),
        ),
        (
            "Branch_3".into(),
            Box::new(
                pool.with("Conv3d_0b_1x1", unit(cin, b3, [1, 1, 1], [1, 1, 1])),
            ),
        ),
    ];
    Concat::new(branches)
}

/// Builds the backbone; returns it with its output channel count.
pub fn i3d(input_channels: usize, width_scale: f64) -> (Sequential, usize) {
    let c = |n| scaled(n, width_scale);
    let mut net = Sequential::new()
        .with("Conv3d_1a_7x7", unit(input_channels, c(64), [7, 7, 7], [2, 2, 2]))
        .with("", MaxPool3d::new([1, 3, 3], [1, 2, 2], Padding::Same))
        .with("Conv3d_2b_1x1", unit(c(64), c(64), [1, 1, 1], [1, 1, 1]))
        .with("Conv3d_2c_3x3", unit(c(64), c(192), [3, 3, 3], [1, 1, 1]))
        .with("", MaxPool3d::new([1, 3, 3], [1, 2, 2], Padding::Same));
    let mut cin = c(192);
    for (name, b0, b1, b2, b3) in MIXED {
        match name {
            "Mixed_4b" => net.push("", MaxPool3d::new([3, 3, 3], [2, 2, 2], Padding::Same)),
            "Mixed_5b" => net.push("", MaxPool3d::new([2, 2, 2], [2, 2, 2], Padding::Same)),
            _ => {}
        }
        let (b0, b1, b2, b3) = (c(b0), [c(b1[0]), c(b1[1])], [c(b2[0]), c(b2[1])], c(b3));
        net.push(name, mixed(cin, b0, b1, b2, b3));
        cin = b0 + b1[1] + b2[1] + b3;
    }
    (net, cin)
}
