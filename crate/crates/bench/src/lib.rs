//! Deterministic fixtures shared by the benchmarks in `benches/`.

use kernelflow_core::{gram_kernel, KernelMatrix};
use nalgebra::DMatrix;

/// Well-conditioned `p×p` kernel built from a fixed trigonometric feature map.
pub fn fixture_kernel(p: usize, phase: f64) -> KernelMatrix {
    let m = 2 * p;
    let features = DMatrix::from_fn(p, m, |i, j| ((i * m + j) as f64 * 0.37 + phase).sin() + if i == j { 1.0 } else { 0.0 });
    gram_kernel(&features, m).expect("fixture features are finite")
}

/// `p×n` target matrix with entries in `[-1, 1]`.
pub fn fixture_targets(p: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, n, |i, j| ((i * 7 + j * 3) as f64 * 0.61).cos())
}
