//! 3D convolution as chunked im2col + GEMM.

use super::{he_normal, join, Layer, Mode, Param, Visitor};
use crate::tensor::Tensor;

/// Upper bound on the im2col buffer, in elements.
const COL_BUDGET: usize = 1 << 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// TensorFlow "SAME": output size `ceil(in / stride)`, the odd extra
    /// padding going after.
    Same,
    /// Symmetric zero padding per axis.
    Explicit([usize; 3]),
}

impl Padding {
    /// (before, after) padding per axis for an input extent.
    pub fn resolve(self, input: [usize; 3], kernel: [usize; 3], stride: [usize; 3]) -> ([usize; 3], [usize; 3]) {
        match self {
            Padding::Explicit(p) => (p, p),
            Padding::Same => {
                let mut before = [0; 3];
                let mut after = [0; 3];
                for a in 0..3 {
                    let out = input[a].div_ceil(stride[a]);
                    let total = ((out - 1) * stride[a] + kernel[a]).saturating_sub(input[a]);
                    before[a] = total / 2;
                    after[a] = total - total / 2;
                }
                (before, after)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Geom {
    n: usize,
    cin: usize,
    input: [usize; 3],
    cout: usize,
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    out: [usize; 3],
}

impl Geom {
    fn new(x: &Tensor, w: &Tensor, stride: [usize; 3], before: [usize; 3], after: [usize; 3]) -> Self {
        let [n, cin, d, h, wd] = x.dims5();
        let [cout, wcin, kd, kh, kw] = w.dims5();
        assert_eq!(cin, wcin, "input has {cin} channels, kernel expects {wcin}");
        let input = [d, h, wd];
        let kernel = [kd, kh, kw];
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + before[a] + after[a];
            assert!(padded >= kernel[a], "kernel larger than padded input");
            out[a] = (padded - kernel[a]) / stride[a] + 1;
        }
        Self {
            n,
            cin,
            input,
            cout,
            kernel,
            stride,
            pad: before,
            out,
        }
    }

    fn k(&self) -> usize {
        self.cin * self.kernel.iter().product::<usize>()
    }

    fn p_in(&self) -> usize {
        self.input.iter().product()
    }

    fn p_out(&self) -> usize {
        self.out.iter().product()
    }

    fn pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.stride == [1, 1, 1] && self.pad == [0, 0, 0]
    }

    fn chunk(&self) -> usize {
        (COL_BUDGET / self.k()).clamp(1, self.p_out())
    }

    /// Input-space origin of each output position in `p0..p0 + len`.
    fn origins(&self, p0: usize, len: usize) -> Vec<[isize; 3]> {
        let [_, oh, ow] = self.out;
        (p0..p0 + len)
            .map(|p| {
                let o = [p / (oh * ow), (p / ow) % oh, p % ow];
                let mut r = [0isize; 3];
                for a in 0..3 {
                    r[a] = (o[a] * self.stride[a]) as isize - self.pad[a] as isize;
                }
                r
            })
            .collect()
    }
}

fn im2col(g: &Geom, x: &[f64], origins: &[[isize; 3]], col: &mut [f64]) {
    let [d, h, w] = g.input;
    let [kd, kh, kw] = g.kernel;
    let len = origins.len();
    let mut row = 0;
    for c in 0..g.cin {
        let xc = &x[c * d * h * w..(c + 1) * d * h * w];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let dst = &mut col[row * len..(row + 1) * len];
                    for (v, o) in dst.iter_mut().zip(origins) {
                        let (z, y, xx) = (o[0] + a as isize, o[1] + b as isize, o[2] + e as isize);
                        *v = if z >= 0
                            && y >= 0
                            && xx >= 0
                            && (z as usize) < d
                            && (y as usize) < h
                            && (xx as usize) < w
                        {
                            xc[(z as usize * h + y as usize) * w + xx as usize]
                        } else {
                            0.0
                        };
                    }
                    row += 1;
                }
            }
        }
    }
}

fn col2im(g: &Geom, col: &[f64], origins: &[[isize; 3]], dx: &mut [f64]) {
    let [d, h, w] = g.input;
    let [kd, kh, kw] = g.kernel;
    let len = origins.len();
    let mut row = 0;
    for c in 0..g.cin {
        let dc = &mut dx[c * d * h * w..(c + 1) * d * h * w];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let src = &col[row * len..(row + 1) * len];
                    for (v, o) in src.iter().zip(origins) {
                        let (z, y, xx) = (o[0] + a as isize, o[1] + b as isize, o[2] + e as isize);
                        if z >= 0
                            && y >= 0
                            && xx >= 0
                            && (z as usize) < d
                            && (y as usize) < h
                            && (xx as usize) < w
                        {
                            dc[(z as usize * h + y as usize) * w + xx as usize] += v;
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// `C = alpha * A B + beta * C` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    // bounds of the strided views, so the unsafe call only touches the slices
    assert!(a.len() > (m - 1) * rsa + (k.max(1) - 1) * csa || k == 0);
    assert!(b.len() > (k.max(1) - 1) * rsb + (n - 1) * csb || k == 0);
    assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Convolution of `x: [N, Cin, D, H, W]` with `w: [Cout, Cin, kd, kh, kw]`.
pub fn conv3d(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&Tensor>,
    stride: [usize; 3],
    pad_before: [usize; 3],
    pad_after: [usize; 3],
) -> Tensor {
    let g = Geom::new(x, w, stride, pad_before, pad_after);
    let (k, p_in, p_out) = (g.k(), g.p_in(), g.p_out());
    let mut out = Tensor::zeros(&[g.n, g.cout, g.out[0], g.out[1], g.out[2]]);
    let chunk = g.chunk();
    let mut col = vec![0.0; if g.pointwise() { 0 } else { k * chunk }];
    for i in 0..g.n {
        let xs = &x.data()[i * g.cin * p_in..(i + 1) * g.cin * p_in];
        let os = &mut out.data_mut()[i * g.cout * p_out..(i + 1) * g.cout * p_out];
        let mut p0 = 0;
        while p0 < p_out {
            let len = chunk.min(p_out - p0);
            if g.pointwise() {
                gemm(g.cout, k, len, w.data(), (k, 1), &xs[p0..], (p_in, 1), 0.0, &mut os[p0..], (p_out, 1));
            } else {
                let origins = g.origins(p0, len);
                im2col(&g, xs, &origins, &mut col[..k * len]);
                gemm(g.cout, k, len, w.data(), (k, 1), &col, (len, 1), 0.0, &mut os[p0..], (p_out, 1));
            }
            p0 += len;
        }
        if let Some(b) = bias {
            for (c, &bv) in b.data().iter().enumerate() {
                for v in &mut os[c * p_out..(c + 1) * p_out] {
                    *v += bv;
                }
            }
        }
    }
    out
}

/// Returns the input gradient and accumulates the kernel gradient into `dw`.
fn conv3d_backward(
    x: &Tensor,
    w: &Tensor,
    grad: &Tensor,
    stride: [usize; 3],
    pad_before: [usize; 3],
    pad_after: [usize; 3],
    dw: &mut Tensor,
) -> Tensor {
    let g = Geom::new(x, w, stride, pad_before, pad_after);
    let (k, p_in, p_out) = (g.k(), g.p_in(), g.p_out());
    let mut dx = Tensor::zeros(x.shape());
    let chunk = g.chunk();
    let mut col = vec![0.0; if g.pointwise() { 0 } else { k * chunk }];
    let mut dcol = vec![0.0; if g.pointwise() { 0 } else { k * chunk }];
    for i in 0..g.n {
        let xs = &x.data()[i * g.cin * p_in..(i + 1) * g.cin * p_in];
        let gs = &grad.data()[i * g.cout * p_out..(i + 1) * g.cout * p_out];
        let dxs = &mut dx.data_mut()[i * g.cin * p_in..(i + 1) * g.cin * p_in];
        let mut p0 = 0;
        while p0 < p_out {
            let len = chunk.min(p_out - p0);
            if g.pointwise() {
                gemm(g.cout, len, k, &gs[p0..], (p_out, 1), &xs[p0..], (1, p_in), 1.0, dw.data_mut(), (k, 1));
                gemm(k, g.cout, len, w.data(), (1, k), &gs[p0..], (p_out, 1), 0.0, &mut dxs[p0..], (p_in, 1));
            } else {
                let origins = g.origins(p0, len);
                im2col(&g, xs, &origins, &mut col[..k * len]);
                gemm(g.cout, len, k, &gs[p0..], (p_out, 1), &col, (1, len), 1.0, dw.data_mut(), (k, 1));
                gemm(k, g.cout, len, w.data(), (1, k), &gs[p0..], (p_out, 1), 0.0, &mut dcol[..k * len], (len, 1));
                col2im(&g, &dcol[..k * len], &origins, dxs);
            }
            p0 += len;
        }
    }
    dx
}

pub struct Conv3d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub stride: [usize; 3],
    pub padding: Padding,
    input: Option<Tensor>,
}

impl Conv3d {
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: Padding,
        bias: bool,
    ) -> Self {
        Self {
            weight: Param::new(Tensor::zeros(&[cout, cin, kernel[0], kernel[1], kernel[2]])),
            bias: bias.then(|| Param::new(Tensor::zeros(&[cout]))),
            stride,
            padding,
            input: None,
        }
    }

    fn pads(&self, x: &Tensor) -> ([usize; 3], [usize; 3]) {
        let s = x.shape();
        let k = self.weight.value.shape();
        self.padding
            .resolve([s[2], s[3], s[4]], [k[2], k[3], k[4]], self.stride)
    }
}

impl Layer for Conv3d {
    fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        let (before, after) = self.pads(&x);
        let out = conv3d(
            &x,
            &self.weight.value,
            self.bias.as_ref().map(|b| &b.value),
            self.stride,
            before,
            after,
        );
        if mode == Mode::Train {
            self.input = Some(x);
        }
        out
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let x = self.input.take().expect("conv backward without train forward");
        let (before, after) = self.pads(&x);
        if let Some(b) = self.bias.as_mut() {
            let (n, c, s) = grad.ncs();
            let db = b.grad_mut().data_mut();
            for i in 0..n {
                for (ch, acc) in db.iter_mut().enumerate().take(c) {
                    *acc += grad.data()[(i * c + ch) * s..(i * c + ch + 1) * s].iter().sum::<f64>();
                }
            }
        }
        let w = self.weight.value.clone();
        conv3d_backward(&x, &w, &grad, self.stride, before, after, self.weight.grad_mut())
    }

    fn visit(&mut self, prefix: &str, f: &mut Visitor<'_>) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = self.bias.as_mut() {
            f(&join(prefix, "bias"), b);
        }
    }

    fn init(&mut self, rng: &mut rand_chacha::ChaCha8Rng) {
        let s = self.weight.value.shape();
        let fan_in = s[1] * s[2] * s[3] * s[4];
        he_normal(&mut self.weight.value, fan_in, 2f64.sqrt(), rng);
        if let Some(b) = self.bias.as_mut() {
            b.value.data_mut().fill(0.0);
        }
    }
}
