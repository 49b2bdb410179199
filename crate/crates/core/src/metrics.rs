//! Kernel-comparison metrics: off-diagonal correlation, variance fraction in
//! the label subspace, eigenspectrum power-law slope and GP scoring.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{KernelError, Result};
use crate::kernel::{eigen_spectrum, KernelMatrix};
use crate::sumkernel::{natural_gradient_fit, FitOptions, SumKernelModel};

pub const DEFAULT_DROP_COUNT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub value: f64,
    /// One side has constant off-diagonal entries; `value` is then 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumSlope {
    pub slope: f64,
    /// Non-positive eigenvalues left out of the fit.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpScore {
    pub score: f64,
    /// Weights on `K` and on `I`.
    pub lambda: Vec<f64>,
    pub converged: bool,
    /// A weight sits on its floor, as happens for all-zero targets.
    pub degenerate: bool,
}

/// Metrics of a subject kernel, with the correlation taken against a reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub correlation: f64,
    pub correlation_degenerate: bool,
    pub subspace_fraction: f64,
    pub spectrum_slope: f64,
    pub spectrum_excluded: usize,
    pub gp_score: f64,
    pub gp_degenerate: bool,
}

/// Pearson correlation over the strictly upper triangles.
pub fn kernel_correlation(ka: &KernelMatrix, kb: &KernelMatrix) -> Result<Correlation> {
    let p = ka.size();
    if kb.size() != p {
        return Err(KernelError::invalid(format!("kernel sizes {p} and {} differ", kb.size())));
    }
    if p < 3 {
        return Err(KernelError::invalid("correlation needs at least three points"));
    }
    let upper = |k: &KernelMatrix| -> Vec<f64> {
        (0..p).flat_map(|i| ((i + 1)..p).map(move |j| (i, j))).map(|(i, j)| k.entries()[(i, j)]).collect()
    };
    let (a, b) = (upper(ka), upper(kb));
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    // Relative test so that rounding noise on constant entries still counts as constant.
    let flat = |s: f64, m: f64, v: &[f64]| {
        let scale = v.iter().fold(m.abs(), |acc, x| acc.max(x.abs()));
        s <= (1e-13 * scale).powi(2) * n
    };
    if flat(saa, ma, &a) || flat(sbb, mb, &b) {
        return Ok(Correlation { value: 0.0, degenerate: true });
    }
    Ok(Correlation { value: (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0), degenerate: false })
}

/// One-hot `P×C` label matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<DMatrix<f64>> {
    if let Some(c) = labels.iter().find(|c| **c >= classes) {
        return Err(KernelError::invalid(format!("class {c} out of range for {classes} classes")));
    }
    let mut y = DMatrix::zeros(labels.len(), classes);
    for (i, c) in labels.iter().enumerate() {
        y[(i, *c)] = 1.0;
    }
    Ok(y)
}

/// `tr(P_Y K)/tr(K)` with `P_Y` the orthogonal projector onto the columns of `Y`.
pub fn subspace_variance_fraction(k: &KernelMatrix, y: &DMatrix<f64>) -> Result<f64> {
    if y.nrows() != k.size() {
        return Err(KernelError::invalid(format!("labels have {} rows for {} points", y.nrows(), k.size())));
    }
    let trace = k.trace();
    if !(trace > 0.0) {
        return Err(KernelError::invalid("kernel trace must be positive"));
    }
    let basis = column_basis(y);
    let projected = (basis.transpose() * k.entries() * &basis).trace();
    Ok((projected / trace).clamp(0.0, 1.0))
}

/// Orthonormal basis of the column space, from the left singular vectors.
fn column_basis(y: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = y.clone().svd(true, false);
    let u = svd.u.expect("requested");
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * y.nrows().max(y.ncols()) as f64;
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|i| svd.singular_values[*i] > tol).collect();
    DMatrix::from_fn(y.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

/// Least-squares slope of `log λ_k` against `log k` over ranks after `drop_count`.
///
/// Ranks keep their position in the full spectrum. Non-positive eigenvalues are
/// skipped and counted in `excluded`.
pub fn spectrum_slope(eigenvalues: &[f64], drop_count: usize) -> Result<SpectrumSlope> {
    let mut excluded = 0;
    let mut points = Vec::new();
    for (idx, &ev) in eigenvalues.iter().enumerate().skip(drop_count) {
        if ev > 0.0 && ev.is_finite() {
            points.push((((idx + 1) as f64).ln(), ev.ln()));
        } else {
            excluded += 1;
        }
    }
    if points.len() < 4 {
        return Err(KernelError::invalid(format!(
            "need at least 4 positive eigenvalues after dropping {drop_count}, have {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    Ok(SpectrumSlope { slope: sxy / sxx, excluded })
}

/// Maximized log marginal of `λ₁K + λ₂I` for targets `Y`.
pub fn gp_score(k: &KernelMatrix, y: &DMatrix<f64>) -> Result<GpScore> {
    let p = k.size();
    let trace = k.trace();
    if !(trace > 0.0) {
        return Err(KernelError::invalid("kernel trace must be positive"));
    }
    // Start from a scale matched to the targets so the fit is equivariant in K's scale.
    let target = y.norm_squared() / (y.nrows() * y.ncols().max(1)) as f64;
    let target = if target > 0.0 { target } else { 1.0 };
    let weights = vec![0.5 * target * p as f64 / trace, 0.5 * target];
    let model = SumKernelModel::new(vec![k.clone(), KernelMatrix::identity(p)], weights)?;
    let options = FitOptions { max_iters: 1000, tol: 1e-9, damping: None };
    let (_, report) = natural_gradient_fit(&model, y, options)?;
    Ok(GpScore {
        score: report.log_marginal,
        lambda: report.lambda,
        converged: report.converged,
        degenerate: report.at_floor,
    })
}

/// Correlation of `subject` against `reference`; the other metrics are of `subject`.
pub fn metric_report(
    subject: &KernelMatrix,
    reference: &KernelMatrix,
    y: &DMatrix<f64>,
    drop_count: usize,
) -> Result<MetricReport> {
    let corr = kernel_correlation(subject, reference)?;
    let eig = eigen_spectrum(subject).eigenvalues;
    let slope = spectrum_slope(eig.as_slice(), drop_count)?;
    let score = gp_score(subject, y)?;
    Ok(MetricReport {
        correlation: corr.value,
        correlation_degenerate: corr.degenerate,
        subspace_fraction: subspace_variance_fraction(subject, y)?,
        spectrum_slope: slope.slope,
        spectrum_excluded: slope.excluded,
        gp_score: score.score,
        gp_degenerate: score.degenerate,
    })
}
