//! Mode of a Wishart density versus its mean.
//!
//! For `K ~ Wishart(J/N, N)` the log density is, up to constants,
//! `((N−P−1)/2) log|K| − (N/2) tr(J⁻¹K)`, whose mode `((N−P−1)/N) J` falls
//! well short of the mean `J` when `N` is comparable to `P`. Adding
//! `((P+1)/2) log|K|` moves the maximizer to `J`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{KernelError, Result};
use crate::kernel::{factorize, KernelMatrix};

const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Serialize)]
pub struct WishartCheck {
    /// `((N−P−1)/N)·J`, clamped at zero.
    pub uncorrected_mode: KernelMatrix,
    /// Set when `N ≤ P + 1`, so the uncorrected mode is not positive definite.
    pub degenerate: bool,
    pub corrected_argmax: KernelMatrix,
    pub iterations: usize,
}

/// Corrected objective `(N/2)(log|K| − tr(J⁻¹K))`.
fn corrected_objective(k: &DMatrix<f64>, j_inv: &DMatrix<f64>, n: f64) -> Option<f64> {
    let chol = k.clone().cholesky()?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Some(0.5 * n * (log_det - (j_inv * k).trace()))
}

pub fn wishart_mode_correction_check(j: &KernelMatrix, n: usize) -> Result<WishartCheck> {
    let p = j.size();
    if p == 0 || n == 0 {
        return Err(KernelError::invalid("need a non-empty kernel and positive degrees of freedom"));
    }
    let chol = factorize(j, 0.0)?;
    if chol.jitter > 0.0 {
        return Err(KernelError::singular("scale kernel must be strictly positive definite"));
    }
    let j_inv = chol.inverse();
    let nf = n as f64;
    let coef = (nf - p as f64 - 1.0) / nf;
    let degenerate = coef <= 0.0;
    let uncorrected_mode = j.scaled(coef.max(0.0));

    // Riemannian ascent: K ← K + η K ∇ K, with ∇ = (N/2)(K⁻¹ − J⁻¹).
    // For η = 1/N this is K + ½(K − K J⁻¹ K), a contraction towards J.
    let mut k = DMatrix::identity(p, p) * (j.trace() / p as f64);
    let mut value = corrected_objective(&k, &j_inv, nf).expect("scaled identity is positive definite");
    let mut iterations = 0;
    let mut step = 0.5;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let direction = &k - &k * &j_inv * &k;
        let candidate = (&k + &direction * step + (&k + &direction * step).transpose()) * 0.5;
        match corrected_objective(&candidate, &j_inv, nf) {
            // Near the maximum the objective is flat to rounding, so allow ties.
            Some(v) if v >= value - 64.0 * f64::EPSILON * value.abs() => {
                let change = (&candidate - &k).amax() / k.amax();
                k = candidate;
                value = v;
                if change < 1e-14 {
                    break;
                }
                step = (step * 1.5).min(0.5);
            }
            _ => {
                step *= 0.5;
                if step < 1e-12 {
                    break;
                }
            }
        }
    }
    Ok(WishartCheck { uncorrected_mode, degenerate, corrected_argmax: KernelMatrix::from_symmetrized(k)?, iterations })
}
