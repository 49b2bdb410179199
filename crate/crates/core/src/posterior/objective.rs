use nalgebra::DMatrix;
use serde::Serialize;

use super::{KernelPath, PathMethod, WidthProfile};
use crate::error::{KernelError, Result};
use crate::kernel::factorize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveReport {
    pub objective: f64,
    /// Largest relative gradient over the free kernels: `‖∇‖_max` divided by
    /// the summed max-norms of the terms that cancel at stationarity.
    pub residual: f64,
}

/// Objective of a path and its stationarity residual over the interior kernels.
///
/// MAP: `−½ Σ_ℓ N_ℓ tr(K_{ℓ−1}⁻¹ K_ℓ)`.
/// Langevin: `Σ_ℓ (N_ℓ/2)(log|K_{ℓ−1}⁻¹ K_ℓ| − tr(K_{ℓ−1}⁻¹ K_ℓ))`.
pub fn objective_and_residual(path: &KernelPath, profile: &WidthProfile, method: PathMethod) -> Result<ObjectiveReport> {
    objective_with_free_top(path, profile, method, false)
}

/// As [`objective_and_residual`], optionally treating the top kernel as free
/// too (prior-only setting with no output constraint).
pub fn objective_with_free_top(
    path: &KernelPath,
    profile: &WidthProfile,
    method: PathMethod,
    free_top: bool,
) -> Result<ObjectiveReport> {
    let kernels = &path.kernels;
    let depth = profile.widths().len();
    if kernels.len() != depth + 1 {
        return Err(KernelError::invalid(format!(
            "path has {} kernels, width profile needs {}",
            kernels.len(),
            depth + 1
        )));
    }
    let mut inverses = Vec::with_capacity(kernels.len());
    let mut log_dets = Vec::with_capacity(kernels.len());
    for (layer, k) in kernels.iter().enumerate() {
        let chol = factorize(k, 0.0).map_err(|e| match e {
            KernelError::SingularKernel(m) => KernelError::SingularKernel(format!("layer {layer}: {m}")),
            other => other,
        })?;
        if chol.jitter > 0.0 {
            return Err(KernelError::singular(format!("kernel at layer {layer} is not strictly positive definite")));
        }
        log_dets.push(chol.log_det());
        inverses.push(chol.inverse());
    }

    let mut objective = 0.0;
    for layer in 1..=depth {
        let n = profile.n(layer);
        let tr = (&inverses[layer - 1] * kernels[layer].entries()).trace();
        objective += match method {
            PathMethod::Map => -0.5 * n * tr,
            PathMethod::Langevin => 0.5 * n * (log_dets[layer] - log_dets[layer - 1] - tr),
        };
    }

    let last_free = if free_top { depth } else { depth - 1 };
    let mut residual: f64 = 0.0;
    for layer in 1..=last_free {
        let n = profile.n(layer);
        let inv = &inverses[layer];
        // Contributions from the factor linking K_{ℓ−1} → K_ℓ ...
        let below: DMatrix<f64> = match method {
            PathMethod::Map => &inverses[layer - 1] * (-0.5 * n),
            PathMethod::Langevin => (inv - &inverses[layer - 1]) * (0.5 * n),
        };
        // ... and from K_ℓ → K_{ℓ+1}, if that factor exists.
        let above = if layer < depth {
            let n_next = profile.n(layer + 1);
            let sandwich = inv * kernels[layer + 1].entries() * inv;
            match method {
                PathMethod::Map => sandwich * (0.5 * n_next),
                PathMethod::Langevin => (sandwich - inv) * (0.5 * n_next),
            }
        } else {
            DMatrix::zeros(inv.nrows(), inv.ncols())
        };
        let grad = &below + &above;
        let scale = below.amax() + above.amax();
        if scale > 0.0 {
            residual = residual.max(grad.amax() / scale);
        }
    }
    Ok(ObjectiveReport { objective, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram_kernel, KernelMatrix};
    use crate::posterior::{langevin_kernel_path, map_kernel_path, PathDiagnostics};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_pd(rng: &mut ChaCha8Rng, p: usize) -> KernelMatrix {
        let f = DMatrix::from_fn(p, p + 3, |_, _| StandardNormal.sample(&mut *rng));
        gram_kernel(&f, p + 3).unwrap()
    }

    fn path_of(kernels: Vec<KernelMatrix>, method: PathMethod) -> KernelPath {
        KernelPath { kernels, method, diagnostics: PathDiagnostics::default() }
    }

    #[test]
    fn prior_only_scalar_is_stationary_at_one() {
        let k = KernelMatrix::identity(1);
        let profile = WidthProfile::new(vec![10]).unwrap();
        let at_one = objective_with_free_top(&path_of(vec![k.clone(), k.clone()], PathMethod::Langevin), &profile, PathMethod::Langevin, true)
            .unwrap();
        assert_eq!(at_one.residual, 0.0);
        assert!((at_one.objective + 5.0).abs() < 1e-14);
        let off = objective_with_free_top(&path_of(vec![k.clone(), k.scaled(1.5)], PathMethod::Langevin), &profile, PathMethod::Langevin, true)
            .unwrap();
        assert!(off.residual > 0.1);
    }

    #[test]
    fn closed_form_paths_are_stationary_and_perturbations_are_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..5 {
            let (k0, k_out) = (random_pd(&mut rng, 3), random_pd(&mut rng, 3));
            let profile = WidthProfile::uniform(12, 12, 3).unwrap();
            let map = map_kernel_path(&k0, &k_out, &profile).unwrap();
            let report = objective_and_residual(&map, &profile, PathMethod::Map).unwrap();
            assert!(report.residual < 1e-6, "map residual {}", report.residual);

            let profile = WidthProfile::uniform(12, 5, 3).unwrap();
            let lang = langevin_kernel_path(&k0, &k_out, 12, 5, 3).unwrap();
            let report = objective_and_residual(&lang, &profile, PathMethod::Langevin).unwrap();
            assert!(report.residual < 1e-6, "langevin residual {}", report.residual);

            for layer in 1..=3 {
                let mut bumped = lang.clone();
                let k = &bumped.kernels[layer];
                let diag = DMatrix::from_diagonal(&(k.entries().diagonal() * 0.01));
                bumped.kernels[layer] = KernelMatrix::new(k.entries() + diag).unwrap();
                let report = objective_and_residual(&bumped, &profile, PathMethod::Langevin).unwrap();
                assert!(report.residual > 1e-3, "layer {layer}: {}", report.residual);
            }
        }
    }

    #[test]
    fn rejects_mismatched_or_singular_paths() {
        let k = KernelMatrix::identity(2);
        let profile = WidthProfile::new(vec![3, 3]).unwrap();
        assert!(objective_and_residual(&path_of(vec![k.clone(), k.clone()], PathMethod::Map), &profile, PathMethod::Map).is_err());
        let singular = KernelMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        let res = objective_and_residual(&path_of(vec![k.clone(), singular, k], PathMethod::Map), &profile, PathMethod::Map);
        assert!(matches!(res, Err(KernelError::SingularKernel(_))));
    }
}
