//! Monte Carlo sampler of finite deep linear networks.
//!
//! Convolutional layers are sampled in weight space (shared filters). Fully
//! connected and locally connected layers are sampled from the exact
//! conditional law of the activations given the previous layer, which is
//! Gaussian with covariance `J` and needs far fewer random numbers.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::{ArchitectureSpec, NetworkKind};
use crate::error::{KernelError, Result};
use crate::kernel::KernelMatrix;
use crate::labels;
use crate::seed::rng_for;
use crate::stats::{jackknife_variance, Welford};

/// Default cap on `P·S·N` activation entries per layer.
pub const DEFAULT_MEMORY_CAP: usize = 1 << 24;

#[derive(Debug, Clone, Copy)]
pub enum SamplerInput<'a> {
    /// Input kernel over P datapoints (fully connected networks).
    Kernel(&'a KernelMatrix),
    /// S×M₀ input activities of one datapoint (spatial networks).
    Activities(&'a DMatrix<f64>),
}

/// Per-entry statistics of the top-layer kernel over sampled networks.
///
/// For spatial networks the top kernel is the 1×1 full-image readout.
#[derive(Debug, Clone, Serialize)]
pub struct KernelSampleStats {
    pub n_networks: usize,
    pub mean: DMatrix<f64>,
    pub mean_se: DMatrix<f64>,
    pub variance: DMatrix<f64>,
    /// Jackknife standard error of `variance`.
    pub variance_se: DMatrix<f64>,
    /// Mean S×S kernel of the last convolutional layer, when there is one.
    pub hidden_mean: Option<DMatrix<f64>>,
}

pub fn sample_finite_network_kernels(
    spec: &ArchitectureSpec,
    input: SamplerInput<'_>,
    n_networks: usize,
    seed: u64,
) -> Result<KernelSampleStats> {
    sample_finite_network_kernels_capped(spec, input, n_networks, seed, DEFAULT_MEMORY_CAP)
}

pub fn sample_finite_network_kernels_capped(
    spec: &ArchitectureSpec,
    input: SamplerInput<'_>,
    n_networks: usize,
    seed: u64,
    memory_cap: usize,
) -> Result<KernelSampleStats> {
    spec.validate()?;
    if n_networks < 2 {
        return Err(KernelError::invalid("need at least two sampled networks"));
    }
    if spec.depth() == 0 {
        return Err(KernelError::InvalidSpec("network depth must be at least 1".into()));
    }
    let rows = match (spec.kind, input) {
        (NetworkKind::Fc, SamplerInput::Kernel(k)) => k.size(),
        (NetworkKind::Cnn | NetworkKind::Lcn, SamplerInput::Activities(h)) => {
            if h.nrows() != spec.spatial_size {
                return Err(KernelError::invalid(format!(
                    "input has {} locations, spec has S={}",
                    h.nrows(),
                    spec.spatial_size
                )));
            }
            h.nrows()
        }
        _ => return Err(KernelError::invalid("input kind does not match the architecture")),
    };
    for &n in &spec.widths {
        let elements = rows.saturating_mul(n);
        if elements > memory_cap {
            return Err(KernelError::Resource(format!(
                "layer needs {elements} activation entries, cap is {memory_cap}"
            )));
        }
    }

    let draws: Vec<(DMatrix<f64>, Option<DMatrix<f64>>)> = match input {
        SamplerInput::Kernel(l0) => {
            let root = psd_sqrt(l0.entries());
            (0..n_networks)
                .into_par_iter()
                .map(|i| (sample_fc(&root, &spec.widths, &mut net_rng(seed, i)), None))
                .collect()
        }
        SamplerInput::Activities(h0) => (0..n_networks)
            .into_par_iter()
            .map(|i| sample_spatial(spec, h0, &mut net_rng(seed, i)))
            .collect(),
    };
    Ok(summarize(&draws))
}

fn net_rng(seed: u64, i: usize) -> ChaCha8Rng {
    rng_for(seed, &labels!["network", i])
}

fn normals(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_iterator(rows, cols, (0..rows * cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)))
}

/// Symmetric PSD square root; tiny negative eigenvalues are clamped.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let mut scaled = eig.eigenvectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= eig.eigenvalues[j].max(0.0).sqrt();
    }
    scaled * eig.eigenvectors.transpose()
}

/// Top kernel of one FC network; each layer draws `A = L^{1/2} Z`.
fn sample_fc(root0: &DMatrix<f64>, widths: &[usize], rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut root = root0.clone();
    let mut k = DMatrix::zeros(0, 0);
    for (idx, &n) in widths.iter().enumerate() {
        let a = &root * normals(rng, root.ncols(), n, 1.0);
        k = &a * a.transpose() / n as f64;
        if idx + 1 < widths.len() {
            root = psd_sqrt(&k);
        }
    }
    k
}

/// S×(D·M) matrix whose block `d` holds the activities shifted by displacement `d`.
fn shifted_features(h: &DMatrix<f64>, shifts: &[usize]) -> DMatrix<f64> {
    let (s, m) = h.shape();
    let mut f = DMatrix::zeros(s, shifts.len() * m);
    for (b, &d) in shifts.iter().enumerate() {
        for c in 0..m {
            for r in 0..s {
                f[(r, b * m + c)] = h[((r + d) % s, c)];
            }
        }
    }
    f
}

fn sample_spatial(
    spec: &ArchitectureSpec,
    h0: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let shifts = spec.wrapped_displacements();
    let (hidden, readout) = spec.widths.split_at(spec.depth() - 1);
    let mut h = h0.clone();
    for &n in hidden {
        h = match spec.kind {
            NetworkKind::Cnn => cnn_layer(&h, &shifts, n, rng),
            _ => lcn_layer_conditional(&h, &shifts, n, rng),
        };
    }
    let hidden_kernel = (!hidden.is_empty()).then(|| &h * h.transpose() / h.ncols() as f64);
    // Readout: shared 1×1 projection, kernel averaged over locations.
    let (s, m) = h.shape();
    let n = readout[0];
    let a = &h * normals(rng, m, n, 1.0 / (m as f64).sqrt());
    let top = a.norm_squared() / (n * s) as f64;
    (DMatrix::from_element(1, 1, top), hidden_kernel)
}

fn cnn_layer(h: &DMatrix<f64>, shifts: &[usize], n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let f = shifted_features(h, shifts);
    let w = normals(rng, f.ncols(), n, 1.0 / (f.ncols() as f64).sqrt());
    f * w
}

/// Given the previous layer, LCN activations are independent across locations
/// with variance `J_rr = (1/D) Σ_d L_{r+d, r+d}`.
fn lcn_layer_conditional(h: &DMatrix<f64>, shifts: &[usize], n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (s, m) = h.shape();
    let l_diag: Vec<f64> = (0..s).map(|r| h.row(r).norm_squared() / m as f64).collect();
    let sd: Vec<f64> = (0..s)
        .map(|r| (shifts.iter().map(|&d| l_diag[(r + d) % s]).sum::<f64>() / shifts.len() as f64).sqrt())
        .collect();
    let mut a = normals(rng, s, n, 1.0);
    for (r, sd_r) in sd.iter().enumerate() {
        a.row_mut(r).scale_mut(*sd_r);
    }
    a
}

/// Weight-space LCN sampler (independent filters at every output location).
///
/// Much slower than the conditional route; kept as an oracle for it.
pub fn sample_lcn_weight_space(
    spec: &ArchitectureSpec,
    h0: &DMatrix<f64>,
    n_networks: usize,
    seed: u64,
) -> Result<KernelSampleStats> {
    spec.validate()?;
    if spec.kind != NetworkKind::Lcn || n_networks < 2 || spec.depth() == 0 {
        return Err(KernelError::invalid("weight-space LCN sampler needs an LCN spec and two networks"));
    }
    let shifts = spec.wrapped_displacements();
    let (hidden, readout) = spec.widths.split_at(spec.depth() - 1);
    let draws: Vec<(DMatrix<f64>, Option<DMatrix<f64>>)> = (0..n_networks)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, &labels!["lcn-weights", i]);
            let mut h = h0.clone();
            for &n in hidden {
                let f = shifted_features(&h, &shifts);
                let scale = 1.0 / (f.ncols() as f64).sqrt();
                let mut next = DMatrix::zeros(f.nrows(), n);
                for r in 0..f.nrows() {
                    let w = normals(&mut rng, f.ncols(), n, scale);
                    next.set_row(r, &(f.row(r) * w));
                }
                h = next;
            }
            let hidden_kernel = (!hidden.is_empty()).then(|| &h * h.transpose() / h.ncols() as f64);
            let (s, m) = h.shape();
            let a = &h * normals(&mut rng, m, readout[0], 1.0 / (m as f64).sqrt());
            (DMatrix::from_element(1, 1, a.norm_squared() / (readout[0] * s) as f64), hidden_kernel)
        })
        .collect();
    Ok(summarize(&draws))
}

fn summarize(draws: &[(DMatrix<f64>, Option<DMatrix<f64>>)]) -> KernelSampleStats {
    let n = draws.len();
    let (rows, cols) = draws[0].0.shape();
    let mut mean = DMatrix::zeros(rows, cols);
    let mut mean_se = DMatrix::zeros(rows, cols);
    let mut variance = DMatrix::zeros(rows, cols);
    let mut variance_se = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let samples: Vec<f64> = draws.iter().map(|(k, _)| k[(i, j)]).collect();
            let est = jackknife_variance(&samples);
            mean[(i, j)] = est.mean;
            mean_se[(i, j)] = (est.variance / n as f64).sqrt();
            variance[(i, j)] = est.variance;
            variance_se[(i, j)] = est.std_error;
        }
    }
    let hidden_mean = draws[0].1.as_ref().map(|first| {
        let mut acc = DMatrix::zeros(first.nrows(), first.ncols());
        let mut count = Welford::new();
        for (_, h) in draws {
            acc += h.as_ref().expect("every draw has a hidden kernel");
            count.push(0.0);
        }
        acc / count.n as f64
    });
    KernelSampleStats { n_networks: n, mean, mean_se, variance, variance_se, hidden_mean }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{make_input_state, spatial_cov_recursion, RecursionMode, SpatialKernelState};

    #[test]
    fn single_unit_variance_is_chi_square() {
        let spec = ArchitectureSpec::fc(vec![1]);
        let l0 = KernelMatrix::identity(1);
        let stats = sample_finite_network_kernels(&spec, SamplerInput::Kernel(&l0), 10_000, 1).unwrap();
        let (v, se) = (stats.variance[(0, 0)], stats.variance_se[(0, 0)]);
        assert!((v - 2.0).abs() <= 3.0 * se, "var {v} ± {se}");
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = ArchitectureSpec::fc(vec![4, 4]);
        let l0 = KernelMatrix::identity(2);
        let a = sample_finite_network_kernels(&spec, SamplerInput::Kernel(&l0), 50, 9).unwrap();
        let b = sample_finite_network_kernels(&spec, SamplerInput::Kernel(&l0), 50, 9).unwrap();
        assert_eq!(a.variance, b.variance);
        assert_eq!(a.mean, b.mean);
    }

    #[test]
    fn memory_guard_and_input_checks() {
        let spec = ArchitectureSpec::fc(vec![1000]);
        let l0 = KernelMatrix::identity(10);
        assert!(matches!(
            sample_finite_network_kernels_capped(&spec, SamplerInput::Kernel(&l0), 10, 0, 5000),
            Err(KernelError::Resource(_))
        ));
        assert!(sample_finite_network_kernels(&spec, SamplerInput::Kernel(&l0), 1, 0).is_err());
        let h = DMatrix::zeros(4, 3);
        assert!(sample_finite_network_kernels(&spec, SamplerInput::Activities(&h), 10, 0).is_err());
    }

    #[test]
    fn shifted_features_wrap() {
        let h = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let f = shifted_features(&h, &[2, 0, 1]);
        assert_eq!(f, DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 2.0, 1.0, 2.0, 3.0, 2.0, 3.0, 1.0]));
    }

    #[test]
    fn lcn_conditional_route_matches_weight_space() {
        let st = make_input_state(false, 6, 8, 2).unwrap();
        let spec = ArchitectureSpec::spatial(NetworkKind::Lcn, 3, 6, 6, 8);
        let fast = sample_finite_network_kernels(&spec, SamplerInput::Activities(&st.raw), 6000, 4).unwrap();
        let slow = sample_lcn_weight_space(&spec, &st.raw, 6000, 5).unwrap();
        let diff = (fast.variance[(0, 0)] - slow.variance[(0, 0)]).abs();
        let se = fast.variance_se[(0, 0)].hypot(slow.variance_se[(0, 0)]);
        assert!(diff <= 3.0 * se, "conditional {} vs weight space {}", fast.variance[(0, 0)], slow.variance[(0, 0)]);
        let dm = (fast.mean[(0, 0)] - slow.mean[(0, 0)]).abs();
        assert!(dm <= 3.0 * fast.mean_se[(0, 0)].hypot(slow.mean_se[(0, 0)]));
    }

    #[test]
    fn small_cnn_matches_exact_recursion() {
        let st = make_input_state(false, 5, 6, 1).unwrap();
        let spec = ArchitectureSpec::spatial(NetworkKind::Cnn, 3, 4, 5, 6);
        let mc = sample_finite_network_kernels(&spec, SamplerInput::Activities(&st.raw), 8000, 6).unwrap();
        let analytic = spatial_cov_recursion(&st.realized(), &spec, RecursionMode::Exact).unwrap();
        let (v, se) = (mc.variance[(0, 0)], mc.variance_se[(0, 0)]);
        assert!((v - analytic.final_variance).abs() <= 3.0 * se, "mc {v} ± {se} vs {}", analytic.final_variance);
        assert!((mc.mean[(0, 0)] - 1.0).abs() <= 3.0 * mc.mean_se[(0, 0)]);
        let hidden = mc.hidden_mean.unwrap();
        let expected: &SpatialKernelState = &analytic.layers[2];
        assert!((hidden - &expected.mean_kernel).amax() < 0.1);
    }
}
