use crate::tensor::Tensor;

/// Inflates `[out, in, k, k]` to `[out, in, depth, k, k]` by replicating each
/// kernel along depth and scaling by `1 / depth`, so a depth-constant input
/// gives the 2D response.
pub fn inflate_kernel(weights_2d: &Tensor, depth: usize) -> Tensor {
    assert!(depth >= 1, "inflation depth must be at least 1");
    let s = weights_2d.shape();
    assert_eq!(s.len(), 4, "expected a 2D kernel [out, in, kh, kw], got {s:?}");
    let plane = s[2] * s[3];
    let scale = 1.0 / depth as f64;
    let mut data = Vec::with_capacity(weights_2d.len() * depth);
    for kernel in weights_2d.data().chunks(plane) {
        for _ in 0..depth {
            data.extend(kernel.iter().map(|v| v * scale));
        }
    }
    Tensor::from_vec(&[s[0], s[1], depth, s[2], s[3]], data)
}
