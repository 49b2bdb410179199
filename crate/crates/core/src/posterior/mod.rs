//! Posterior kernels of deep linear networks conditioned on an output kernel.
//!
//! Closed-form MAP and Langevin stationary paths from the input kernel `K₀`
//! to the output kernel `K_{L+1}`, their objectives and stationarity checks,
//! the Wishart mode correction, and a small Langevin SDE simulator.

mod langevin;
mod map;
mod objective;
mod sde;
mod wishart;

pub use langevin::{langevin_kernel_path, solve_t_ratio, TSolution};
pub use map::map_kernel_path;
pub use objective::{objective_and_residual, objective_with_free_top, ObjectiveReport};
pub use sde::{langevin_simulate, reparam_kernels, ReparamSample, SdeConfig, SdeInit, SdeResult, MAX_HALVINGS};
pub use wishart::{wishart_mode_correction_check, WishartCheck};

use serde::{Deserialize, Serialize};

use crate::error::{KernelError, Result};
use crate::kernel::{eigen_spectrum, ensure_positive_definite, KernelMatrix};

/// Relative jitter added to a rank-deficient output kernel.
pub const OUTPUT_JITTER: f64 = 1e-8;

/// Layer widths `N_1 … N_{L+1}`; the last entry is the output count `Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthProfile {
    widths: Vec<usize>,
}

impl WidthProfile {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.is_empty() || widths.iter().any(|&n| n == 0) {
            return Err(KernelError::invalid("widths must be non-empty and positive"));
        }
        Ok(Self { widths })
    }

    /// `L` hidden layers of width `n` followed by `y` outputs.
    pub fn uniform(n: usize, y: usize, l: usize) -> Result<Self> {
        let mut widths = vec![n; l];
        widths.push(y);
        Self::new(widths)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Number of hidden layers `L`.
    pub fn hidden_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// `N_ℓ` for `ℓ` in `1..=L+1`.
    pub fn n(&self, layer: usize) -> f64 {
        self.widths[layer - 1] as f64
    }

    pub fn output_count(&self) -> usize {
        *self.widths.last().expect("non-empty")
    }

    /// Geometric mean of `N_1 … N_ℓ`.
    pub fn geo_mean_upto(&self, layer: usize) -> f64 {
        assert!(layer >= 1 && layer <= self.widths.len());
        let logs: f64 = self.widths[..layer].iter().map(|&n| (n as f64).ln()).sum();
        (logs / layer as f64).exp()
    }

    /// Geometric mean of `N_{ℓ+1} … N_{L+1}`.
    pub fn geo_mean_after(&self, layer: usize) -> f64 {
        assert!(layer < self.widths.len());
        let rest = &self.widths[layer..];
        let logs: f64 = rest.iter().map(|&n| (n as f64).ln()).sum();
        (logs / rest.len() as f64).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathMethod {
    Map,
    Langevin,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PathDiagnostics {
    /// Absolute jitter added to `K₀`.
    pub k0_jitter: f64,
    /// Absolute jitter added to `K_{L+1}`.
    pub k_out_jitter: f64,
    /// Largest T-solver iteration count over eigenvalues (Langevin only).
    pub t_iterations: usize,
    /// Largest T-solver residual over eigenvalues (Langevin only).
    pub t_residual: f64,
    /// Number of zero eigenvalues handled at the bracket boundary.
    pub degenerate_eigenvalues: usize,
    /// Relative stationarity residual of the path, when computed.
    pub stationarity_residual: Option<f64>,
}

/// Kernels `K₀ … K_{L+1}`.
#[derive(Debug, Clone, Serialize)]
pub struct KernelPath {
    pub kernels: Vec<KernelMatrix>,
    pub method: PathMethod,
    pub diagnostics: PathDiagnostics,
}

/// Jitter-rescued endpoints shared by both path constructions.
pub(crate) fn prepare_endpoints(
    k0: &KernelMatrix,
    k_out: &KernelMatrix,
) -> Result<(KernelMatrix, KernelMatrix, PathDiagnostics)> {
    if k0.size() != k_out.size() {
        return Err(KernelError::invalid(format!("endpoint sizes differ: {} vs {}", k0.size(), k_out.size())));
    }
    if !k_out.validate(crate::kernel::DEFAULT_PSD_TOL).pass {
        return Err(KernelError::invalid("output kernel is not positive semidefinite"));
    }
    let (k0, k0_jitter) = ensure_positive_definite(k0)?;
    let spec = eigen_spectrum(k_out);
    let (max, min) = (spec.eigenvalues[0], spec.eigenvalues[k_out.size() - 1]);
    let (k_out, k_out_jitter) = if max > 0.0 && min > 1e-12 * max {
        (k_out.clone(), 0.0)
    } else {
        let jitter = OUTPUT_JITTER * k_out.trace().max(f64::MIN_POSITIVE) / k_out.size() as f64;
        (k_out.with_jitter(jitter), jitter)
    };
    Ok((k0, k_out, PathDiagnostics { k0_jitter, k_out_jitter, ..Default::default() }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn geometric_means() {
        let p = WidthProfile::new(vec![4, 16, 64]).unwrap();
        assert_relative_eq!(p.geo_mean_upto(2), 8.0, epsilon = 1e-12);
        assert_relative_eq!(p.geo_mean_after(1), 32.0, epsilon = 1e-12);
        assert_eq!(p.hidden_layers(), 2);
        assert!(WidthProfile::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn geometric_means_factor_the_product(widths in prop::collection::vec(1usize..500, 2..8), pick in 0usize..100) {
            let p = WidthProfile::new(widths.clone()).unwrap();
            let total = widths.len();
            let l = 1 + pick % (total - 1);
            let log_prod: f64 = widths.iter().map(|&n| (n as f64).ln()).sum();
            let lhs = l as f64 * p.geo_mean_upto(l).ln() + (total - l) as f64 * p.geo_mean_after(l).ln();
            prop_assert!((lhs - log_prod).abs() <= 1e-10 * log_prod.abs().max(1.0));
        }
    }
}
