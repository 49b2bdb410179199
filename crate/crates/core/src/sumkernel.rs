//! Gaussian-process marginal likelihood for `K = Σ λ_i K_i` and natural-gradient
//! fitting of the weights `λ_i`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{KernelError, Result};
use crate::kernel::{factorize, KernelMatrix};

pub const DEFAULT_LAMBDA_MIN: f64 = 1e-10;
const LN_2PI: f64 = 1.837_877_066_409_345_3;
/// Step halvings allowed when a natural-gradient step lowers the likelihood.
const MAX_BACKTRACKS: usize = 40;

#[derive(Debug, Clone, Serialize)]
pub struct SumKernelModel {
    pub components: Vec<KernelMatrix>,
    pub weights: Vec<f64>,
    pub lambda_min: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientAndFisher {
    pub gradient: DVector<f64>,
    pub fisher: DMatrix<f64>,
}

/// Serialized form is the fit report `{lambda, log_marginal, iterations, converged}`.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub lambda: Vec<f64>,
    pub log_marginal: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Some weight ended on the `λ_min` floor.
    #[serde(skip)]
    pub at_floor: bool,
    /// `(λ, log marginal)` after every iteration, starting from the initial model.
    #[serde(skip)]
    pub trajectory: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// `None` selects `1e-6·tr(F)/components` at every step.
    pub damping: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-8, damping: None }
    }
}

struct Factorized {
    log_det: f64,
    inverse: DMatrix<f64>,
}

impl SumKernelModel {
    pub fn new(components: Vec<KernelMatrix>, weights: Vec<f64>) -> Result<Self> {
        Self::with_floor(components, weights, DEFAULT_LAMBDA_MIN)
    }

    pub fn with_floor(components: Vec<KernelMatrix>, weights: Vec<f64>, lambda_min: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(KernelError::invalid("need at least one component kernel"));
        }
        if components.len() != weights.len() {
            return Err(KernelError::invalid(format!(
                "{} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        let p = components[0].size();
        if components.iter().any(|k| k.size() != p) {
            return Err(KernelError::invalid("component kernels differ in size"));
        }
        if !(lambda_min > 0.0) {
            return Err(KernelError::invalid("weight floor must be positive"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= lambda_min && w.is_finite())) {
            return Err(KernelError::invalid(format!("weight {w} is below the floor {lambda_min}")));
        }
        Ok(Self { components, weights, lambda_min })
    }

    pub fn size(&self) -> usize {
        self.components[0].size()
    }

    pub fn combined(&self) -> DMatrix<f64> {
        let p = self.size();
        self.components
            .iter()
            .zip(&self.weights)
            .fold(DMatrix::zeros(p, p), |acc, (k, w)| acc + k.entries() * *w)
    }

    fn factorize(&self) -> Result<Factorized> {
        let k = KernelMatrix::from_symmetrized(self.combined())?;
        let chol = factorize(&k, 0.0)?;
        if chol.jitter > 0.0 {
            return Err(KernelError::singular("combined kernel is not strictly positive definite"));
        }
        Ok(Factorized { log_det: chol.log_det(), inverse: chol.inverse() })
    }

    fn check_targets(&self, y: &DMatrix<f64>) -> Result<()> {
        if y.nrows() != self.size() || y.ncols() == 0 {
            return Err(KernelError::invalid(format!(
                "targets are {}x{}, expected {} rows and at least one column",
                y.nrows(),
                y.ncols(),
                self.size()
            )));
        }
        Ok(())
    }
}

/// `−½tr(K⁻¹YYᵀ) − (N/2)log|K| − (NP/2)log 2π`.
pub fn log_marginal(model: &SumKernelModel, y: &DMatrix<f64>) -> Result<f64> {
    model.check_targets(y)?;
    let f = model.factorize()?;
    Ok(log_marginal_from(&f, y))
}

fn log_marginal_from(f: &Factorized, y: &DMatrix<f64>) -> f64 {
    let (p, n) = (y.nrows() as f64, y.ncols() as f64);
    let quad = (y.transpose() * &f.inverse * y).trace();
    -0.5 * quad - 0.5 * n * f.log_det - 0.5 * n * p * LN_2PI
}

pub fn gradient_and_fisher(model: &SumKernelModel, y: &DMatrix<f64>) -> Result<GradientAndFisher> {
    model.check_targets(y)?;
    let f = model.factorize()?;
    Ok(gradient_and_fisher_from(model, &f, y))
}

fn gradient_and_fisher_from(model: &SumKernelModel, f: &Factorized, y: &DMatrix<f64>) -> GradientAndFisher {
    let n = y.ncols() as f64;
    let l_y = &f.inverse * (y * y.transpose());
    let ls: Vec<DMatrix<f64>> = model.components.iter().map(|k| &f.inverse * k.entries()).collect();
    let m = ls.len();
    // tr(AB) for the products below, without forming AB.
    let tr_prod = |a: &DMatrix<f64>, b: &DMatrix<f64>| a.component_mul(&b.transpose()).sum();
    let gradient = DVector::from_iterator(m, ls.iter().map(|l| 0.5 * tr_prod(l, &l_y) - 0.5 * n * l.trace()));
    let mut fisher = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let v = 0.5 * n * tr_prod(&ls[a], &ls[b]);
            fisher[(a, b)] = v;
            fisher[(b, a)] = v;
        }
    }
    GradientAndFisher { gradient, fisher }
}

/// Gradient with the components pinned at the floor and pushing downwards zeroed.
fn projected_gradient(weights: &[f64], lambda_min: f64, g: &DVector<f64>) -> f64 {
    weights
        .iter()
        .zip(g.iter())
        .map(|(w, gi)| if *w <= lambda_min && *gi < 0.0 { 0.0 } else { gi.abs() })
        .fold(0.0, f64::max)
}

/// Iterates `λ ← λ + (F + damping·I)⁻¹ g`, projected onto `λ ≥ λ_min`.
///
/// Weights pinned at the floor by a downhill gradient are left out of the
/// solve. A step that lowers the likelihood is halved until it does not. Convergence
/// is declared when the projected gradient is below `tol`, or when the weights
/// stop moving in floating point.
pub fn natural_gradient_fit(model: &SumKernelModel, y: &DMatrix<f64>, options: FitOptions) -> Result<(SumKernelModel, FitReport)> {
    model.check_targets(y)?;
    let mut current = model.clone();
    let mut fact = current.factorize()?;
    let mut value = log_marginal_from(&fact, y);
    let mut trajectory = vec![(current.weights.clone(), value)];
    let mut converged = false;
    let mut iterations = 0;
    let m = current.weights.len();

    while iterations < options.max_iters {
        let gf = gradient_and_fisher_from(&current, &fact, y);
        if projected_gradient(&current.weights, current.lambda_min, &gf.gradient) <= options.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let damping = options.damping.unwrap_or(1e-6 * gf.fisher.trace() / m as f64);
        // Weights held at the floor by a downhill gradient drop out of the
        // system, otherwise their clipped steps stall the free ones.
        let free: Vec<usize> = (0..m)
            .filter(|&i| !(current.weights[i] <= current.lambda_min && gf.gradient[i] < 0.0))
            .collect();
        let system = DMatrix::from_fn(free.len(), free.len(), |a, b| {
            gf.fisher[(free[a], free[b])] + if a == b { damping } else { 0.0 }
        });
        let rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| gf.gradient[i]));
        let free_step = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| KernelError::Instability("damped Fisher matrix is singular".into()))?;
        let mut step = DVector::zeros(m);
        for (a, &i) in free.iter().enumerate() {
            step[i] = free_step[a];
        }

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let weights: Vec<f64> = current
                .weights
                .iter()
                .zip(step.iter())
                .map(|(w, s)| (w + scale * s).max(current.lambda_min))
                .collect();
            let candidate = SumKernelModel { weights, ..current.clone() };
            if let Ok(cf) = candidate.factorize() {
                let v = log_marginal_from(&cf, y);
                if v.is_finite() && v >= value - 64.0 * f64::EPSILON * value.abs() {
                    accepted = Some((candidate, cf, v));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((candidate, cf, v)) = accepted else {
            break;
        };
        let moved = candidate
            .weights
            .iter()
            .zip(&current.weights)
            .any(|(a, b)| (a - b).abs() > 4.0 * f64::EPSILON * b.abs());
        current = candidate;
        fact = cf;
        value = v;
        trajectory.push((current.weights.clone(), value));
        if !moved {
            converged = true;
            break;
        }
    }

    let at_floor = current.weights.iter().any(|w| *w <= current.lambda_min);
    let report = FitReport {
        lambda: current.weights.clone(),
        log_marginal: value,
        iterations,
        converged,
        at_floor,
        trajectory,
    };
    Ok((current, report))
}
