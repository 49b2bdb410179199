//! Langevin stationary kernels through the layer-to-layer ratio `T`.
//!
//! With uniform hidden width `N` and `Y` outputs the stationarity conditions
//! give `T_ℓ = T` for the hidden layers and `T_{L+1} = I + (N/Y)(T − I)`.
//! All of them commute with `M = K₀^{-1/2} K_{L+1} K₀^{-1/2}`, so each
//! eigenvalue `s` of `M` yields a scalar equation `(1 + r(t − 1)) t^L = s`.

use nalgebra::DMatrix;
use serde::Serialize;

use super::{prepare_endpoints, KernelPath, PathMethod, WidthProfile};
use crate::error::{KernelError, Result};
use crate::kernel::{eigen_spectrum, map_spectrum, sqrt_and_inv_sqrt, KernelMatrix};

const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TSolution {
    pub t: f64,
    /// `t − 1`, kept separately because it carries more precision near `t = 1`.
    pub t_minus_one: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Set when `s = 0` and the root sits on the bracket boundary.
    pub degenerate: bool,
}

/// Solves `(1 + ratio·(t − 1))·t^L = s` for the root with a positive leading factor.
///
/// Works in `u = t − 1` so that ratios far from one keep full precision.
/// Newton steps are taken from `t₀ = s^{1/(L+1)}` and replaced by bisection
/// whenever they leave the current bracket.
pub fn solve_t_ratio(s: f64, ratio: f64, l: usize) -> Result<TSolution> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(KernelError::invalid(format!("eigenvalue must be finite and non-negative, got {s}")));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(KernelError::invalid(format!("width ratio must be positive, got {ratio}")));
    }
    if l == 0 {
        return Err(KernelError::invalid("need at least one hidden layer"));
    }
    let lf = l as f64;
    let f = |u: f64| (1.0 + ratio * u) * (lf * u.ln_1p()).exp() - s;
    let df = |u: f64| {
        let pow = ((lf - 1.0) * u.ln_1p()).exp();
        ratio * (1.0 + u) * pow + (1.0 + ratio * u) * lf * pow
    };
    let lower = (-1.0f64).max(-1.0 / ratio);
    if s == 0.0 {
        return Ok(TSolution { t: 1.0 + lower, t_minus_one: lower, iterations: 0, residual: 0.0, degenerate: true });
    }
    let tol = 1e-12 * s.max(1.0);
    let (mut lo, mut hi) = (lower, s.max(1.0));
    let mut u = (s.ln() / (lf + 1.0)).exp_m1().clamp(lo, hi);
    let mut fu = f(u);
    let mut iterations = 0;
    while fu.abs() > tol && iterations < MAX_ITERATIONS {
        iterations += 1;
        if fu < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let newton = u - fu / df(u);
        let next = if newton > lo && newton < hi && newton.is_finite() { newton } else { 0.5 * (lo + hi) };
        if next == u {
            break;
        }
        u = next;
        fu = f(u);
    }
    if fu.abs() > tol && hi - lo > 4.0 * f64::EPSILON * u.abs().max(1e-300) {
        return Err(KernelError::Instability(format!(
            "T solver did not converge for s={s}, ratio={ratio}, L={l}: residual {fu:e}"
        )));
    }
    Ok(TSolution { t: 1.0 + u, t_minus_one: u, iterations, residual: fu.abs(), degenerate: false })
}

/// Langevin stationary path for `L` hidden layers of width `n` and `y` outputs.
pub fn langevin_kernel_path(k0: &KernelMatrix, k_out: &KernelMatrix, n: usize, y: usize, l: usize) -> Result<KernelPath> {
    let profile = WidthProfile::uniform(n, y, l)?;
    let (k0, k_out, mut diagnostics) = prepare_endpoints(k0, k_out)?;
    let ratio = n as f64 / y as f64;
    let (half, inv_half) = sqrt_and_inv_sqrt(&k0);
    let m = KernelMatrix::from_symmetrized(&inv_half * k_out.entries() * &inv_half)?;
    let spec = eigen_spectrum(&m);
    let mut solutions = Vec::with_capacity(spec.eigenvalues.len());
    for &s in spec.eigenvalues.iter() {
        let sol = solve_t_ratio(s.max(0.0), ratio, l)?;
        diagnostics.t_iterations = diagnostics.t_iterations.max(sol.iterations);
        diagnostics.t_residual = diagnostics.t_residual.max(sol.residual);
        diagnostics.degenerate_eigenvalues += sol.degenerate as usize;
        solutions.push(sol);
    }

    let mut kernels = Vec::with_capacity(profile.widths().len() + 1);
    kernels.push(k0.clone());
    for layer in 1..=l {
        let lf = layer as f64;
        let mut idx = 0;
        let powered: DMatrix<f64> = map_spectrum(&spec, |_| {
            let sol = &solutions[idx];
            idx += 1;
            (lf * sol.t_minus_one.ln_1p()).exp()
        });
        kernels.push(KernelMatrix::from_symmetrized(&half * powered * &half)?);
    }
    kernels.push(k_out);
    Ok(KernelPath { kernels, method: PathMethod::Langevin, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{geodesic_power, gram_kernel};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_pd(seed: u64, p: usize) -> KernelMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = DMatrix::from_fn(p, p + 2, |_, _| StandardNormal.sample(&mut rng));
        gram_kernel(&f, p + 2).unwrap()
    }

    #[test]
    fn t_ratio_examples() {
        let sol = solve_t_ratio(8.0, 1.0, 1).unwrap();
        assert_relative_eq!(sol.t, 8f64.sqrt(), epsilon = 1e-12);
        let sol = solve_t_ratio(8.0, 2.0, 1).unwrap();
        assert_relative_eq!(sol.t, (1.0 + 65f64.sqrt()) / 4.0, epsilon = 1e-12);
        for s in [0.01, 0.5, 3.0, 250.0] {
            // Wide hidden layers: u ≈ (s − 1)/ratio to first order.
            let u = solve_t_ratio(s, 1e8, 4).unwrap().t_minus_one;
            assert_relative_eq!(u, (s - 1.0) / 1e8, max_relative = 1e-3);
        }
    }

    #[test]
    fn zero_eigenvalue_is_boundary_root() {
        let sol = solve_t_ratio(0.0, 2.0, 3).unwrap();
        assert!(sol.degenerate);
        assert_relative_eq!(sol.t, 0.5, epsilon = 1e-15);
        assert!(solve_t_ratio(-1.0, 1.0, 1).is_err());
        assert!(solve_t_ratio(1.0, 0.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn t_ratio_residual_within_tolerance(s in 1e-6f64..1e4, log_r in -8f64..8.0, l in 1usize..20) {
            let ratio = 10f64.powf(log_r);
            let sol = solve_t_ratio(s, ratio, l).unwrap();
            prop_assert!(sol.residual <= 1e-12 * s.max(1.0), "{sol:?}");
            prop_assert!(1.0 + ratio * sol.t_minus_one > 0.0);
        }
    }

    #[test]
    fn equal_widths_reproduce_the_geodesic() {
        let (k0, k_out) = (random_pd(1, 4), random_pd(2, 4));
        let l = 3;
        let path = langevin_kernel_path(&k0, &k_out, 7, 7, l).unwrap();
        for (layer, k) in path.kernels.iter().enumerate() {
            let geo = geodesic_power(&k0, &k_out, layer as f64 / (l + 1) as f64).unwrap();
            assert!((k.entries() - geo.entries()).amax() <= 1e-10 * geo.max_abs(), "layer {layer}");
        }
    }

    #[test]
    fn wide_hidden_layers_stay_at_the_prior() {
        let (k0, k_out) = (random_pd(3, 3), random_pd(4, 3));
        let path = langevin_kernel_path(&k0, &k_out, 100_000_000, 1, 4).unwrap();
        for k in &path.kernels[1..5] {
            assert!((k.entries() - k0.entries()).amax() <= 1e-6 * k0.max_abs());
        }
    }

    #[test]
    fn narrow_hidden_layers_reach_the_output() {
        let (k0, k_out) = (random_pd(5, 3), random_pd(6, 3));
        let l = 3;
        let path = langevin_kernel_path(&k0, &k_out, 1, 100_000_000, l).unwrap();
        assert!((path.kernels[l].entries() - k_out.entries()).amax() <= 1e-6 * k_out.max_abs());
        for layer in 1..=l {
            let geo = geodesic_power(&k0, &k_out, layer as f64 / l as f64).unwrap();
            assert!((path.kernels[layer].entries() - geo.entries()).amax() <= 1e-6 * geo.max_abs());
        }
    }

    #[test]
    fn ratio_recursion_holds_per_eigenvalue() {
        // N (t − 1) = Y (t_{L+1} − 1) with t_{L+1} = s / t^L.
        for (s, n, y, l) in [(5.0, 10.0, 3.0, 2usize), (0.2, 4.0, 9.0, 5), (40.0, 64.0, 64.0, 1)] {
            let sol = solve_t_ratio(s, n / y, l).unwrap();
            let t_top = s / sol.t.powi(l as i32);
            assert_relative_eq!(n * sol.t_minus_one, y * (t_top - 1.0), epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn commuting_endpoints_interpolate_monotonically() {
        let k0 = KernelMatrix::from_diagonal(&[1.0, 2.0, 0.5]).unwrap();
        let k_out = KernelMatrix::from_diagonal(&[5.0, 0.1, 0.5]).unwrap();
        let path = langevin_kernel_path(&k0, &k_out, 6, 2, 4).unwrap();
        for i in 0..3 {
            let seq: Vec<f64> = path.kernels.iter().map(|k| k.entries()[(i, i)]).collect();
            let up = seq.windows(2).all(|w| w[1] >= w[0] - 1e-12);
            let down = seq.windows(2).all(|w| w[1] <= w[0] + 1e-12);
            assert!(up || down, "eigen {i}: {seq:?}");
        }
    }

    #[test]
    fn overall_width_scale_does_not_matter() {
        let (k0, k_out) = (random_pd(7, 3), random_pd(8, 3));
        let a = langevin_kernel_path(&k0, &k_out, 8, 4, 3).unwrap();
        let b = langevin_kernel_path(&k0, &k_out, 80, 40, 3).unwrap();
        for (x, y) in a.kernels.iter().zip(&b.kernels) {
            assert!((x.entries() - y.entries()).amax() <= 1e-12 * x.max_abs());
        }
    }
}
