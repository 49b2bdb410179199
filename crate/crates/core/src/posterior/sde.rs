//! Euler–Maruyama simulation of Langevin dynamics in the reparameterised
//! network `A_ℓ = U_ℓᵀ V_ℓ`, where `U_ℓ` is the upper Cholesky factor of
//! `K_{ℓ−1}` and the `V_ℓ` have standard normal priors.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{KernelError, Result};
use crate::kernel::KernelMatrix;
use crate::labels;
use crate::seed::rng_for;

/// Largest number of step-size halvings before giving up.
pub const MAX_HALVINGS: usize = 10;
const N_BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SdeInit {
    /// Start from a draw of the prior, `V_ℓ` standard normal.
    PriorDraw,
    /// Start from `V_ℓ = 0`. The objective is undefined there, so this is rejected.
    Zero,
}

#[derive(Debug, Clone)]
pub struct SdeConfig {
    pub k0: KernelMatrix,
    /// Output kernel `(1/Y) F Fᵀ`; `None` simulates the prior only.
    pub k_out: Option<KernelMatrix>,
    /// Hidden width.
    pub n: usize,
    /// Output count.
    pub y: usize,
    /// Number of hidden layers.
    pub l: usize,
    pub dt: f64,
    /// Steps recorded after burn-in.
    pub n_steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub init: SdeInit,
}

/// `V_ℓ` together with `R_ℓ = (1/N_ℓ) V_ℓ V_ℓᵀ`.
#[derive(Debug, Clone)]
pub struct ReparamSample {
    pub v: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl ReparamSample {
    pub fn new(v: DMatrix<f64>) -> Self {
        let r = &v * v.transpose() / v.ncols() as f64;
        Self { v, r }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SdeResult {
    /// Time-averaged `R_ℓ` for `ℓ = 1..=L`.
    pub mean_r: Vec<DMatrix<f64>>,
    /// Time-averaged `K_ℓ` for `ℓ = 1..=L`.
    pub mean_k: Vec<DMatrix<f64>>,
    /// Batch-means standard errors of `mean_r`.
    pub r_se: Vec<DMatrix<f64>>,
    /// Batch-means standard errors of `mean_k`.
    pub k_se: Vec<DMatrix<f64>>,
    /// Step size in use at the end of the run.
    pub final_dt: f64,
    pub halvings: usize,
}

/// Lower Cholesky factor, or `None` when a pivot is not safely positive.
fn cholesky_lower(k: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = k.diagonal().amax();
    let l = k.clone().cholesky()?.l();
    l.diagonal().iter().all(|d| d.is_finite() && d * d > 1e-13 * scale).then_some(l)
}

/// Kernels `K₁ … K_L` from `K₀` and the `V_ℓ`.
pub fn reparam_kernels(k0: &KernelMatrix, vs: &[DMatrix<f64>]) -> Result<Vec<KernelMatrix>> {
    let forward = Forward::run(k0.entries(), vs).ok_or_else(|| KernelError::singular("a layer kernel is singular"))?;
    forward.kernels[1..].iter().map(|k| KernelMatrix::from_symmetrized(k.clone())).collect()
}

struct Forward {
    /// `K₀ … K_L`.
    kernels: Vec<DMatrix<f64>>,
    /// Lower factors of `K₀ … K_{L−1}`.
    lowers: Vec<DMatrix<f64>>,
    /// `A₁ … A_L`.
    activations: Vec<DMatrix<f64>>,
}

impl Forward {
    fn run(k0: &DMatrix<f64>, vs: &[DMatrix<f64>]) -> Option<Self> {
        let mut kernels = vec![k0.clone()];
        let mut lowers = Vec::with_capacity(vs.len());
        let mut activations = Vec::with_capacity(vs.len());
        for v in vs {
            let lower = cholesky_lower(kernels.last().expect("non-empty"))?;
            let a = &lower * v;
            let k = &a * a.transpose() / v.ncols() as f64;
            kernels.push((&k + k.transpose()) * 0.5);
            lowers.push(lower);
            activations.push(a);
        }
        Some(Self { kernels, lowers, activations })
    }
}

/// Reverse-mode derivative of `K = L Lᵀ`: maps `∂/∂L` to the symmetric `∂/∂K`.
pub(crate) fn cholesky_backward(lower: &DMatrix<f64>, lower_bar: &DMatrix<f64>) -> DMatrix<f64> {
    let mut phi = lower.transpose() * lower_bar.lower_triangle();
    phi = phi.lower_triangle();
    for i in 0..phi.nrows() {
        phi[(i, i)] *= 0.5;
    }
    let lt = lower.transpose();
    // S = L⁻ᵀ Φ L⁻¹.
    let left = lt.solve_upper_triangular(&phi).expect("positive pivots");
    let s = lt.solve_upper_triangular(&left.transpose()).expect("positive pivots").transpose();
    (&s + s.transpose()) * 0.5
}

/// Log joint and its gradient with respect to every `V_ℓ`.
fn log_joint_and_grad(
    k0: &DMatrix<f64>,
    k_out: Option<&DMatrix<f64>>,
    y: f64,
    vs: &[DMatrix<f64>],
) -> Option<(f64, Vec<DMatrix<f64>>)> {
    let fwd = Forward::run(k0, vs)?;
    let l = vs.len();
    let mut value = -0.5 * vs.iter().map(|v| v.norm_squared()).sum::<f64>();
    let mut k_bar = match k_out {
        Some(target) => {
            let top = &fwd.kernels[l];
            let lower = cholesky_lower(top)?;
            let chol = nalgebra::Cholesky::new(top.clone())?;
            let inv = chol.inverse();
            let log_det = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
            value += -0.5 * y * ((&inv * target).trace() + log_det);
            (&inv * target * &inv - &inv) * (0.5 * y)
        }
        None => DMatrix::zeros(k0.nrows(), k0.nrows()),
    };
    let mut grads = vec![DMatrix::zeros(0, 0); l];
    for idx in (0..l).rev() {
        let n = vs[idx].ncols() as f64;
        let a_bar = &k_bar * &fwd.activations[idx] * (2.0 / n);
        let lower = &fwd.lowers[idx];
        grads[idx] = lower.transpose() * &a_bar - &vs[idx];
        if idx > 0 {
            let lower_bar = &a_bar * vs[idx].transpose();
            k_bar = cholesky_backward(lower, &lower_bar);
        }
    }
    Some((value, grads))
}

pub fn langevin_simulate(config: &SdeConfig) -> Result<SdeResult> {
    let p = config.k0.size();
    if config.l == 0 || config.n == 0 || config.y == 0 {
        return Err(KernelError::invalid("need at least one hidden layer and positive widths"));
    }
    if config.n_steps == 0 {
        return Err(KernelError::Precondition("no steps are recorded after burn-in".into()));
    }
    if config.init == SdeInit::Zero {
        return Err(KernelError::Precondition(
            "V = 0 gives a singular kernel; the log-determinant term is undefined".into(),
        ));
    }
    if !(config.dt > 0.0 && config.dt.is_finite()) {
        return Err(KernelError::invalid("step size must be positive"));
    }
    if let Some(k) = &config.k_out {
        if k.size() != p {
            return Err(KernelError::invalid("output kernel size differs from K₀"));
        }
    }
    let k0 = config.k0.entries();
    if cholesky_lower(k0).is_none() {
        return Err(KernelError::singular("K₀ must be strictly positive definite"));
    }
    let k_out = config.k_out.as_ref().map(|k| k.entries());
    let y = config.y as f64;

    let mut rng = rng_for(config.seed, &labels!["sde"]);
    let normals = |rng: &mut ChaCha8Rng| -> Vec<DMatrix<f64>> {
        (0..config.l)
            .map(|_| DMatrix::from_iterator(p, config.n, (0..p * config.n).map(|_| rng.sample::<f64, _>(StandardNormal))))
            .collect()
    };
    let mut vs = normals(&mut rng);
    let (_, mut grads) = log_joint_and_grad(k0, k_out, y, &vs)
        .ok_or_else(|| KernelError::singular("initial state gives a singular kernel"))?;

    let mut dt = config.dt;
    let mut halvings = 0;
    let batch_len = (config.n_steps / N_BATCHES).max(1);
    let zeros = || vec![DMatrix::<f64>::zeros(p, p); config.l];
    let (mut sum_r, mut sum_k) = (zeros(), zeros());
    let mut batches_r: Vec<Vec<DMatrix<f64>>> = Vec::new();
    let mut batches_k: Vec<Vec<DMatrix<f64>>> = Vec::new();
    let (mut batch_r, mut batch_k) = (zeros(), zeros());

    for step in 0..config.burn_in + config.n_steps {
        loop {
            let noise = normals(&mut rng);
            let proposal: Vec<DMatrix<f64>> = vs
                .iter()
                .zip(&grads)
                .zip(&noise)
                .map(|((v, g), xi)| v + g * (0.5 * dt) + xi * dt.sqrt())
                .collect();
            match log_joint_and_grad(k0, k_out, y, &proposal) {
                Some((value, g)) if value.is_finite() => {
                    vs = proposal;
                    grads = g;
                    break;
                }
                _ => {
                    halvings += 1;
                    if halvings > MAX_HALVINGS {
                        return Err(KernelError::Instability(format!(
                            "kernels left the positive definite cone after {MAX_HALVINGS} step halvings"
                        )));
                    }
                    dt *= 0.5;
                }
            }
        }
        if step < config.burn_in {
            continue;
        }
        let fwd = Forward::run(k0, &vs).expect("accepted states are positive definite");
        for idx in 0..config.l {
            let r = &vs[idx] * vs[idx].transpose() / config.n as f64;
            sum_r[idx] += &r;
            batch_r[idx] += &r;
            sum_k[idx] += &fwd.kernels[idx + 1];
            batch_k[idx] += &fwd.kernels[idx + 1];
        }
        let recorded = step + 1 - config.burn_in;
        if recorded % batch_len == 0 && batches_r.len() < N_BATCHES {
            batches_r.push(std::mem::replace(&mut batch_r, zeros()).into_iter().map(|m| m / batch_len as f64).collect());
            batches_k.push(std::mem::replace(&mut batch_k, zeros()).into_iter().map(|m| m / batch_len as f64).collect());
        }
    }

    let total = config.n_steps as f64;
    let mean_r: Vec<_> = sum_r.into_iter().map(|m| m / total).collect();
    let mean_k: Vec<_> = sum_k.into_iter().map(|m| m / total).collect();
    Ok(SdeResult {
        r_se: batch_standard_errors(&batches_r, config.l, p),
        k_se: batch_standard_errors(&batches_k, config.l, p),
        mean_r,
        mean_k,
        final_dt: dt,
        halvings,
    })
}

fn batch_standard_errors(batches: &[Vec<DMatrix<f64>>], layers: usize, p: usize) -> Vec<DMatrix<f64>> {
    let b = batches.len();
    (0..layers)
        .map(|idx| {
            if b < 2 {
                return DMatrix::from_element(p, p, f64::INFINITY);
            }
            let mean = batches.iter().map(|x| &x[idx]).fold(DMatrix::zeros(p, p), |acc, m| acc + m) / b as f64;
            let var = batches
                .iter()
                .map(|x| (&x[idx] - &mean).map(|v| v * v))
                .fold(DMatrix::zeros(p, p), |acc, m| acc + m)
                / (b - 1) as f64;
            var.map(|v| (v / b as f64).sqrt())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random_pd(rng: &mut ChaCha8Rng, p: usize, m: usize) -> DMatrix<f64> {
        let f = DMatrix::from_fn(p, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        &f * f.transpose() / m as f64
    }

    #[test]
    fn cholesky_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = random_pd(&mut rng, 4, 7);
        let w = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        // f(K) = Σ W ∘ chol(K); its L-gradient is tril(W).
        let f = |k: &DMatrix<f64>| k.clone().cholesky().unwrap().l().component_mul(&w).sum();
        let lower = k.clone().cholesky().unwrap().l();
        let grad = cholesky_backward(&lower, &w);
        let h = 1e-6;
        for (i, j) in [(0, 0), (1, 0), (3, 2), (2, 2), (3, 0)] {
            let mut dk = DMatrix::zeros(4, 4);
            dk[(i, j)] = 1.0;
            dk[(j, i)] = 1.0;
            let fd = (f(&(&k + &dk * h)) - f(&(&k - &dk * h))) / (2.0 * h);
            let analytic = (grad.component_mul(&dk)).sum();
            assert!((fd - analytic).abs() < 1e-6 * fd.abs().max(1.0), "({i},{j}): {fd} vs {analytic}");
        }
    }

    #[test]
    fn log_joint_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k0 = random_pd(&mut rng, 3, 6);
        let k_out = random_pd(&mut rng, 3, 5);
        let vs: Vec<DMatrix<f64>> =
            (0..3).map(|_| DMatrix::from_fn(3, 5, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
        let (_, grads) = log_joint_and_grad(&k0, Some(&k_out), 5.0, &vs).unwrap();
        let h = 1e-6;
        for layer in 0..3 {
            for (i, j) in [(0, 0), (2, 4), (1, 3)] {
                let mut plus = vs.clone();
                plus[layer][(i, j)] += h;
                let mut minus = vs.clone();
                minus[layer][(i, j)] -= h;
                let fd = (log_joint_and_grad(&k0, Some(&k_out), 5.0, &plus).unwrap().0
                    - log_joint_and_grad(&k0, Some(&k_out), 5.0, &minus).unwrap().0)
                    / (2.0 * h);
                let g = grads[layer][(i, j)];
                assert!((fd - g).abs() < 1e-5 * fd.abs().max(1.0), "layer {layer} ({i},{j}): {fd} vs {g}");
            }
        }
    }

    fn base_config() -> SdeConfig {
        SdeConfig {
            k0: KernelMatrix::identity(3),
            k_out: None,
            n: 64,
            y: 1,
            l: 1,
            dt: 0.01,
            n_steps: 100_000,
            burn_in: 500,
            seed: 3,
            init: SdeInit::PriorDraw,
        }
    }

    #[test]
    fn prior_only_averages_to_identity() {
        let res = langevin_simulate(&base_config()).unwrap();
        let (r, se) = (&res.mean_r[0], &res.r_se[0]);
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((r[(i, j)] - target).abs() <= 3.0 * se[(i, j)] + 1e-3, "R[{i}{j}] = {} ± {}", r[(i, j)], se[(i, j)]);
            }
        }
    }

    #[test]
    fn with_data_matches_closed_form_dominant_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k0 = KernelMatrix::from_symmetrized(random_pd(&mut rng, 3, 8)).unwrap();
        let k_out = KernelMatrix::from_symmetrized(random_pd(&mut rng, 3, 32)).unwrap();
        let cfg = SdeConfig {
            k0: k0.clone(),
            k_out: Some(k_out.clone()),
            n: 32,
            y: 32,
            l: 1,
            dt: 0.01,
            n_steps: 60_000,
            burn_in: 2_000,
            seed: 5,
            init: SdeInit::PriorDraw,
        };
        let res = langevin_simulate(&cfg).unwrap();
        let path = crate::posterior::langevin_kernel_path(&k0, &k_out, 32, 32, 1).unwrap();
        let top = |m: &DMatrix<f64>| m.clone().symmetric_eigenvalues().max();
        let (sim, exact) = (top(&res.mean_k[0]), top(path.kernels[1].entries()));
        assert!((sim - exact).abs() < 0.15 * exact, "simulated {sim} vs closed form {exact}");
    }

    #[test]
    fn preconditions() {
        let zero = SdeConfig { init: SdeInit::Zero, ..base_config() };
        assert!(matches!(langevin_simulate(&zero), Err(KernelError::Precondition(_))));
        let no_steps = SdeConfig { n_steps: 0, burn_in: 0, ..base_config() };
        assert!(matches!(langevin_simulate(&no_steps), Err(KernelError::Precondition(_))));
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SdeConfig { n_steps: 200, burn_in: 10, ..base_config() };
        let a = langevin_simulate(&cfg).unwrap();
        let b = langevin_simulate(&cfg).unwrap();
        assert_eq!(a.mean_k, b.mean_k);
    }
}
