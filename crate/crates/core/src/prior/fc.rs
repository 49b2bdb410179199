//! Covariance recursion for the kernel of deep linear fully connected networks.

use nalgebra::DMatrix;
use serde::Serialize;

use super::RecursionMode;
use crate::error::{KernelError, Result};
use crate::kernel::KernelMatrix;

/// Mean `⟨K_ij⟩` and covariance `Cov[K_ij, K_kl]` of a random P×P kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCovariance4 {
    pub size: usize,
    pub mean: DMatrix<f64>,
    /// Row-major over `(i, j, k, l)`.
    pub cov: Vec<f64>,
}

impl KernelCovariance4 {
    pub fn deterministic(mean: &KernelMatrix) -> Self {
        let p = mean.size();
        Self { size: p, mean: mean.entries().clone(), cov: vec![0.0; p.pow(4)] }
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.size + j) * self.size + k) * self.size + l
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.cov[self.index(i, j, k, l)]
    }

    /// `Var[K_ij]`.
    pub fn variance(&self, i: usize, j: usize) -> f64 {
        self.get(i, j, i, j)
    }

    /// One layer of width `n`: `J = L`, then `K | J` is Wishart with `n` degrees of freedom.
    fn propagate(&self, n: usize, mode: RecursionMode) -> Self {
        let p = self.size;
        let m = &self.mean;
        let inv_n = 1.0 / n as f64;
        let mut cov = vec![0.0; self.cov.len()];
        for i in 0..p {
            for j in 0..p {
                for k in 0..p {
                    for l in 0..p {
                        let mut fluct = m[(i, k)] * m[(j, l)] + m[(i, l)] * m[(j, k)];
                        if mode == RecursionMode::Exact {
                            fluct += self.get(i, k, j, l) + self.get(i, l, j, k);
                        }
                        cov[self.index(i, j, k, l)] = self.get(i, j, k, l) + inv_n * fluct;
                    }
                }
            }
        }
        Self { size: p, mean: self.mean.clone(), cov }
    }
}

/// Kernel mean and covariance after each layer; element `ℓ` is layer `ℓ + 1`.
pub fn fc_cov_layers(l0: &KernelMatrix, widths: &[usize], mode: RecursionMode) -> Result<Vec<KernelCovariance4>> {
    if widths.iter().any(|&n| n == 0) {
        return Err(KernelError::InvalidSpec("all widths must be at least 1".into()));
    }
    if !l0.validate(crate::kernel::DEFAULT_PSD_TOL).pass {
        return Err(KernelError::invalid("input kernel is not positive semidefinite"));
    }
    // The inputs are fixed, so the first layer sees a deterministic kernel.
    let mut state = KernelCovariance4::deterministic(l0);
    let mut layers = Vec::with_capacity(widths.len());
    for &n in widths {
        state = state.propagate(n, mode);
        layers.push(state.clone());
    }
    Ok(layers)
}

/// Mean and covariance of the top-layer kernel. Depth zero returns the input
/// kernel with zero covariance.
pub fn fc_cov_recursion(l0: &KernelMatrix, widths: &[usize], mode: RecursionMode) -> Result<KernelCovariance4> {
    let layers = fc_cov_layers(l0, widths, mode)?;
    Ok(layers.into_iter().last().unwrap_or_else(|| KernelCovariance4::deterministic(l0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar(v: f64) -> KernelMatrix {
        KernelMatrix::from_row_slice(1, &[v]).unwrap()
    }

    #[test]
    fn single_layer_single_point() {
        let c = fc_cov_recursion(&scalar(1.0), &[2], RecursionMode::Exact).unwrap();
        assert_relative_eq!(c.variance(0, 0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn approximate_variance_grows_linearly_with_depth() {
        let c = fc_cov_recursion(&scalar(1.0), &[1024; 16], RecursionMode::Approximate).unwrap();
        assert_relative_eq!(c.variance(0, 0), 0.03125, epsilon = 1e-15);
        for depth in 1..10 {
            let c = fc_cov_recursion(&scalar(1.0), &vec![50; depth], RecursionMode::Approximate).unwrap();
            assert_relative_eq!(c.variance(0, 0), 2.0 * depth as f64 / 50.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn exact_single_point_is_compound_growth() {
        // Var[K] = E[K²] − 1 and E[K²] picks up a factor (1 + 2/N) per layer.
        for (depth, n) in [(1, 2), (16, 8), (5, 64), (16, 1024)] {
            let c = fc_cov_recursion(&scalar(1.0), &vec![n; depth], RecursionMode::Exact).unwrap();
            let oracle = (1.0 + 2.0 / n as f64).powi(depth as i32) - 1.0;
            assert_relative_eq!(c.variance(0, 0), oracle, max_relative = 1e-13);
        }
    }

    #[test]
    fn orthonormal_pair_off_diagonal_variance() {
        let c = fc_cov_recursion(&KernelMatrix::identity(2), &[7], RecursionMode::Approximate).unwrap();
        assert_relative_eq!(c.variance(0, 1), 1.0 / 7.0, epsilon = 1e-15);
        assert_eq!(c.mean, DMatrix::identity(2, 2));
    }

    #[test]
    fn depth_zero_is_deterministic() {
        let l0 = KernelMatrix::identity(3);
        let c = fc_cov_recursion(&l0, &[], RecursionMode::Exact).unwrap();
        assert!(c.cov.iter().all(|&v| v == 0.0));
        assert_eq!(c.mean, *l0.entries());
    }

    #[test]
    fn first_layer_matches_wishart_covariance() {
        let l0 = KernelMatrix::from_row_slice(3, &[2.0, 0.5, -0.3, 0.5, 1.0, 0.2, -0.3, 0.2, 1.5]).unwrap();
        let n = 9.0;
        let c = fc_cov_recursion(&l0, &[9], RecursionMode::Exact).unwrap();
        let m = l0.entries();
        for (i, j, k, l) in [(0, 1, 2, 0), (1, 1, 1, 1), (0, 2, 1, 2)] {
            let oracle = (m[(i, k)] * m[(j, l)] + m[(i, l)] * m[(j, k)]) / n;
            assert_relative_eq!(c.get(i, j, k, l), oracle, epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn symmetries_hold_exactly(seed in 0u64..1000, depth in 1usize..5) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let f = DMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
            let l0 = crate::kernel::gram_kernel(&f, 4).unwrap();
            let widths: Vec<usize> = (0..depth).map(|_| rng.random_range(2..20)).collect();
            let c = fc_cov_recursion(&l0, &widths, RecursionMode::Exact).unwrap();
            for i in 0..3 { for j in 0..3 { for k in 0..3 { for l in 0..3 {
                let v = c.get(i, j, k, l);
                prop_assert_eq!(v, c.get(j, i, k, l));
                prop_assert_eq!(v, c.get(i, j, l, k));
                prop_assert_eq!(v, c.get(k, l, i, j));
            }}}}
            for i in 0..3 { for j in 0..3 { prop_assert!(c.variance(i, j) >= -1e-10); } }
        }

        #[test]
        fn approximate_agrees_to_first_order(n in 64usize..2048, depth in 1usize..=16) {
            let widths = vec![n; depth];
            let exact = fc_cov_recursion(&scalar(1.0), &widths, RecursionMode::Exact).unwrap().variance(0, 0);
            let approx = fc_cov_recursion(&scalar(1.0), &widths, RecursionMode::Approximate).unwrap().variance(0, 0);
            prop_assert!((exact - approx).abs() / exact <= 2.0 * depth as f64 / n as f64);
        }
    }
}
