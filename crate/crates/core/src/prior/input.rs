//! Normalized spatial inputs for the convolutional prior experiments.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::spatial::SpatialKernelState;
use crate::error::{KernelError, Result};
use crate::labels;
use crate::seed::rng_for;

#[derive(Debug, Clone)]
pub struct InputState {
    /// Idealized kernel: all-ones (structured) or identity (unstructured).
    pub idealized: SpatialKernelState,
    /// S×M₀ input activities, each location scaled to squared norm M₀.
    pub raw: DMatrix<f64>,
}

impl InputState {
    /// Kernel actually realized by `raw`, `(1/M₀) H Hᵀ`.
    pub fn realized(&self) -> SpatialKernelState {
        SpatialKernelState::from_activities(&self.raw)
    }
}

/// Structured inputs repeat one random vector at every location; unstructured
/// inputs draw an independent vector per location.
pub fn make_input_state(structured: bool, s: usize, m0: usize, seed: u64) -> Result<InputState> {
    if s == 0 || m0 == 0 {
        return Err(KernelError::invalid("spatial size and channel count must be at least 1"));
    }
    let mut rng = rng_for(seed, &labels!["input", if structured { "structured" } else { "unstructured" }]);
    let mut draw = || {
        let mut v: Vec<f64> = (0..m0).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = (m0 as f64).sqrt() / norm;
        v.iter_mut().for_each(|x| *x *= scale);
        v
    };
    let mut raw = DMatrix::zeros(s, m0);
    if structured {
        let v = draw();
        for r in 0..s {
            for (c, x) in v.iter().enumerate() {
                raw[(r, c)] = *x;
            }
        }
    } else {
        for r in 0..s {
            for (c, x) in draw().iter().enumerate() {
                raw[(r, c)] = *x;
            }
        }
    }
    let ideal = if structured { DMatrix::from_element(s, s, 1.0) } else { DMatrix::identity(s, s) };
    Ok(InputState { idealized: SpatialKernelState::deterministic(ideal), raw })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idealized_kernels() {
        let st = make_input_state(true, 4, 10, 0).unwrap();
        assert_eq!(st.idealized.mean_kernel, DMatrix::from_element(4, 4, 1.0));
        let un = make_input_state(false, 4, 10, 0).unwrap();
        assert_eq!(un.idealized.mean_kernel, DMatrix::identity(4, 4));
        assert_eq!(un.raw.shape(), (4, 10));
    }

    #[test]
    fn realized_diagonal_is_one() {
        for structured in [true, false] {
            let st = make_input_state(structured, 32, 100, 3).unwrap();
            let l = st.realized().mean_kernel;
            assert!(l.diagonal().iter().all(|&v| (v - 1.0).abs() < 1e-14));
            if structured {
                assert!(l.iter().all(|&v| (v - 1.0).abs() < 1e-14));
            }
        }
    }

    #[test]
    fn unstructured_cross_terms_are_order_inverse_root_m0() {
        let st = make_input_state(false, 32, 100, 5).unwrap();
        let l = st.realized().mean_kernel;
        let mut sum_sq = 0.0;
        let mut count = 0.0;
        for r in 0..32 {
            for u in 0..32 {
                if r != u {
                    sum_sq += l[(r, u)] * l[(r, u)];
                    count += 1.0;
                }
            }
        }
        let rms = (sum_sq / count).sqrt();
        // For independent directions the cross term has standard deviation 1/√M₀ = 0.1.
        assert!(rms > 0.07 && rms < 0.13, "rms {rms}");
    }
}
