//! Covariance recursion for the spatial kernel of a single datapoint in deep
//! linear convolutional (CNN) and locally connected (LCN) networks.
//!
//! Indices `r, s, u, v` run over spatial locations with circular wrap. The
//! approximate mode tracks the S×S mean kernel and the covariance of its
//! diagonal entries only. The exact mode carries the full `S⁴` covariance
//! tensor and keeps every `1/N` term.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::{ArchitectureSpec, NetworkKind, RecursionMode};
use crate::error::{KernelError, Result};

/// Largest `S⁴` tensor (in elements) the exact mode allocates by default.
pub const DEFAULT_TENSOR_CAP: usize = 1 << 25;

/// Mean kernel across locations and covariance of the diagonal kernel entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialKernelState {
    /// `⟨L_rs⟩`.
    pub mean_kernel: DMatrix<f64>,
    /// `Cov[L_rr, L_uu]`.
    pub diag_cov: DMatrix<f64>,
}

impl SpatialKernelState {
    pub fn deterministic(mean_kernel: DMatrix<f64>) -> Self {
        let s = mean_kernel.nrows();
        Self { mean_kernel, diag_cov: DMatrix::zeros(s, s) }
    }

    /// Fixed inputs given as an S×M activity matrix: kernel `(1/M) H Hᵀ`.
    pub fn from_activities(h: &DMatrix<f64>) -> Self {
        let mut l = h * h.transpose() / h.ncols() as f64;
        l = (&l + l.transpose()) * 0.5;
        Self::deterministic(l)
    }

    pub fn size(&self) -> usize {
        self.mean_kernel.nrows()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpatialRecursion {
    pub mode: RecursionMode,
    /// Input state followed by one state per convolutional layer.
    pub layers: Vec<SpatialKernelState>,
    /// Mean of the full-image readout kernel.
    pub final_mean: f64,
    /// Variance of the full-image readout kernel.
    pub final_variance: f64,
}

pub fn spatial_cov_recursion(
    input: &SpatialKernelState,
    spec: &ArchitectureSpec,
    mode: RecursionMode,
) -> Result<SpatialRecursion> {
    spatial_cov_recursion_capped(input, spec, mode, DEFAULT_TENSOR_CAP)
}

/// As [`spatial_cov_recursion`], refusing exact-mode tensors above `tensor_cap` elements.
pub fn spatial_cov_recursion_capped(
    input: &SpatialKernelState,
    spec: &ArchitectureSpec,
    mode: RecursionMode,
    tensor_cap: usize,
) -> Result<SpatialRecursion> {
    spec.validate()?;
    if spec.kind == NetworkKind::Fc {
        return Err(KernelError::InvalidSpec("spatial recursion needs a CNN or LCN architecture".into()));
    }
    if spec.depth() == 0 {
        return Err(KernelError::InvalidSpec("spatial networks need at least the readout layer".into()));
    }
    let s = spec.spatial_size;
    if input.size() != s || input.diag_cov.nrows() != s {
        return Err(KernelError::invalid(format!("input state is {}x{}, spec has S={s}", input.size(), input.size())));
    }
    let shifts = spec.wrapped_displacements();
    let (hidden, readout) = spec.widths.split_at(spec.depth() - 1);
    let readout = readout[0];
    match mode {
        RecursionMode::Approximate => Ok(approximate(input, spec.kind, hidden, readout, &shifts)),
        RecursionMode::Exact => {
            if input.diag_cov.iter().any(|&v| v != 0.0) {
                return Err(KernelError::Precondition(
                    "exact mode needs deterministic inputs (zero input covariance)".into(),
                ));
            }
            let elements = s.checked_pow(4).unwrap_or(usize::MAX);
            if elements > tensor_cap {
                return Err(KernelError::Resource(format!(
                    "exact spatial recursion needs {elements} tensor elements, cap is {tensor_cap}"
                )));
            }
            Ok(exact(&input.mean_kernel, spec.kind, hidden, readout, &shifts))
        }
    }
}

/// `⟨J_ru⟩ = (1/D) Σ_d ⟨L_{r+d, u+d}⟩`, masked to the diagonal for LCNs.
fn mean_update(m: &DMatrix<f64>, kind: NetworkKind, shifts: &[usize]) -> DMatrix<f64> {
    let s = m.nrows();
    let inv_d = 1.0 / shifts.len() as f64;
    DMatrix::from_fn(s, s, |r, u| {
        if kind == NetworkKind::Lcn && r != u {
            return 0.0;
        }
        shifts.iter().map(|&d| m[((r + d) % s, (u + d) % s)]).sum::<f64>() * inv_d
    })
}

fn approximate(
    input: &SpatialKernelState,
    kind: NetworkKind,
    hidden: &[usize],
    readout: usize,
    shifts: &[usize],
) -> SpatialRecursion {
    let s = input.size();
    let inv_d2 = 1.0 / (shifts.len() * shifts.len()) as f64;
    let mut layers = vec![input.clone()];
    for &n in hidden {
        let prev = layers.last().expect("non-empty");
        let mean = mean_update(&prev.mean_kernel, kind, shifts);
        let diag_cov = DMatrix::from_fn(s, s, |r, u| {
            let mut acc = 0.0;
            for &d in shifts {
                for &e in shifts {
                    acc += prev.diag_cov[((r + d) % s, (u + e) % s)];
                }
            }
            acc * inv_d2 + 2.0 / n as f64 * mean[(r, u)] * mean[(r, u)]
        });
        layers.push(SpatialKernelState { mean_kernel: mean, diag_cov });
    }
    let last = layers.last().expect("non-empty");
    let s2 = (s * s) as f64;
    let final_mean = last.mean_kernel.trace() / s as f64;
    let final_variance = last.diag_cov.sum() / s2 + 2.0 / readout as f64 * last.mean_kernel.norm_squared() / s2;
    SpatialRecursion { mode: RecursionMode::Approximate, layers, final_mean, final_variance }
}

/// Dense `Cov[L_rs, L_uv]` over S locations.
struct Tensor4 {
    s: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    fn zeros(s: usize) -> Self {
        Self { s, data: vec![0.0; s.pow(4)] }
    }

    #[inline]
    fn at(&self, r: usize, s_: usize, u: usize, v: usize) -> f64 {
        let s = self.s;
        self.data[((r * s + s_) * s + u) * s + v]
    }

    fn diag_cov(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.s, self.s, |r, u| self.at(r, r, u, u))
    }
}

/// `Cov[J_rs, J_uv]` from `Cov[L]`, shifting the first pair and then the second.
fn j_covariance(c: &Tensor4, kind: NetworkKind, shifts: &[usize]) -> Tensor4 {
    let s = c.s;
    let inv_d = 1.0 / shifts.len() as f64;
    let s3 = s * s * s;
    match kind {
        NetworkKind::Lcn => {
            // Only J_rr is random: Cov[J_rr, J_uu] = (1/D²) Σ_{d,e} Cov[L_{r+d,r+d}, L_{u+e,u+e}].
            let mut out = Tensor4::zeros(s);
            for r in 0..s {
                for u in 0..s {
                    let mut acc = 0.0;
                    for &d in shifts {
                        for &e in shifts {
                            let (a, b) = ((r + d) % s, (u + e) % s);
                            acc += c.at(a, a, b, b);
                        }
                    }
                    out.data[((r * s + r) * s + u) * s + u] = acc * inv_d * inv_d;
                }
            }
            out
        }
        _ => {
            let mut first = Tensor4::zeros(s);
            first.data.par_chunks_mut(s3).enumerate().for_each(|(r, block)| {
                for s_ in 0..s {
                    for u in 0..s {
                        for v in 0..s {
                            let acc: f64 = shifts.iter().map(|&d| c.at((r + d) % s, (s_ + d) % s, u, v)).sum();
                            block[(s_ * s + u) * s + v] = acc * inv_d;
                        }
                    }
                }
            });
            let mut out = Tensor4::zeros(s);
            out.data.par_chunks_mut(s3).enumerate().for_each(|(r, block)| {
                for s_ in 0..s {
                    for u in 0..s {
                        for v in 0..s {
                            let acc: f64 = shifts.iter().map(|&e| first.at(r, s_, (u + e) % s, (v + e) % s)).sum();
                            block[(s_ * s + u) * s + v] = acc * inv_d;
                        }
                    }
                }
            });
            out
        }
    }
}

/// `Cov[K_rs, K_uv] = Cov[J_rs, J_uv] + (1/N)(E[J_ru J_sv] + E[J_rv J_su])`.
fn k_covariance(cj: &Tensor4, mj: &DMatrix<f64>, n: usize) -> Tensor4 {
    let s = cj.s;
    let inv_n = 1.0 / n as f64;
    let mut out = Tensor4::zeros(s);
    out.data.par_chunks_mut(s * s * s).enumerate().for_each(|(r, block)| {
        for s_ in 0..s {
            for u in 0..s {
                for v in 0..s {
                    let fluct =
                        mj[(r, u)] * mj[(s_, v)] + cj.at(r, u, s_, v) + mj[(r, v)] * mj[(s_, u)] + cj.at(r, v, s_, u);
                    block[(s_ * s + u) * s + v] = cj.at(r, s_, u, v) + inv_n * fluct;
                }
            }
        }
    });
    out
}

fn exact(l0: &DMatrix<f64>, kind: NetworkKind, hidden: &[usize], readout: usize, shifts: &[usize]) -> SpatialRecursion {
    let s = l0.nrows();
    let mut layers = vec![SpatialKernelState::deterministic(l0.clone())];
    let mut mean = l0.clone();
    let mut cov = Tensor4::zeros(s);
    for &n in hidden {
        let mj = mean_update(&mean, kind, shifts);
        let cj = j_covariance(&cov, kind, shifts);
        cov = k_covariance(&cj, &mj, n);
        mean = mj;
        layers.push(SpatialKernelState { mean_kernel: mean.clone(), diag_cov: cov.diag_cov() });
    }
    // Readout: a shared 1×1 projection of width N_{L+1}, averaged over locations.
    let s2 = (s * s) as f64;
    let mut var = 0.0;
    for r in 0..s {
        for u in 0..s {
            var += cov.at(r, r, u, u) + 2.0 / readout as f64 * (mean[(r, u)].powi(2) + cov.at(r, u, r, u));
        }
    }
    SpatialRecursion {
        mode: RecursionMode::Exact,
        layers,
        final_mean: mean.trace() / s as f64,
        final_variance: var / s2,
    }
}
