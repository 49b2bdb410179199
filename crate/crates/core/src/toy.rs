//! Two-layer linear toy model: dataset generation, Monte Carlo evidence and
//! predictive log-probability, and the infinite-width closed form.
//!
//! With second-layer weights integrated out, each output column is Gaussian
//! with covariance `(1/H) X W Wᵀ Xᵀ + σ² I`, so only the first-layer weights
//! are sampled. Everything per sample is done in the column space of `X`
//! (rank at most `X_dim`), which keeps the cost independent of `P`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KernelError, Result};
use crate::labels;
use crate::seed::rng_for;
use crate::stats::{effective_sample_size, log_mean_exp, logsumexp};

pub const DEFAULT_N_SAMPLES: usize = 64_000;
pub const DEFAULT_SIGMA: f64 = 0.1;
pub const DEFAULT_N_TEST: usize = 100;
/// Importance-sampling runs with fewer effective samples are flagged.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 10.0;

/// Default hidden-width grid: powers of two from 1 to 512.
pub fn default_h_grid() -> Vec<usize> {
    (0..10).map(|k| 1usize << k).collect()
}

/// Transformation applied to the inputs seen by the data generator only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputModifier {
    #[default]
    None,
    ScaleInputs(f64),
    ZeroAllButFirst,
}

impl InputModifier {
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match *self {
            InputModifier::None => x.clone(),
            InputModifier::ScaleInputs(f) => x * f,
            InputModifier::ZeroAllButFirst => {
                let mut out = DMatrix::zeros(x.nrows(), x.ncols());
                out.set_column(0, &x.column(0));
                out
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            InputModifier::None => "none".into(),
            InputModifier::ScaleInputs(f) => format!("scale_inputs({f})"),
            InputModifier::ZeroAllButFirst => "zero_all_but_first".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub p: usize,
    pub x_dim: usize,
    pub y_dim: usize,
    pub h_gen: usize,
    pub sigma: f64,
    pub modifier: InputModifier,
    /// Size of the held-out split; zero disables it.
    pub n_test: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            p: 20,
            x_dim: 4,
            y_dim: 10,
            h_gen: 4,
            sigma: DEFAULT_SIGMA,
            modifier: InputModifier::None,
            n_test: DEFAULT_N_TEST,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyMeta {
    pub h_gen: usize,
    pub modifier: InputModifier,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ToyDataset {
    /// Unmodified training inputs.
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub x_test: Option<DMatrix<f64>>,
    pub y_test: Option<DMatrix<f64>>,
    pub meta: ToyMeta,
}

fn standard_normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
    m
}

/// Draws a dataset from the finite network prior with `H_gen` hidden units.
///
/// The modifier changes only what the generator sees; the returned inputs are
/// the original ones.
pub fn generate_toy_dataset(seed: u64, config: &ToyConfig) -> Result<ToyDataset> {
    let ToyConfig { p, x_dim, y_dim, h_gen, sigma, modifier, n_test } = *config;
    if p == 0 || x_dim == 0 || y_dim == 0 || h_gen == 0 {
        return Err(KernelError::invalid("dataset dimensions must all be at least 1"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(KernelError::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if let InputModifier::ScaleInputs(f) = modifier {
        if !f.is_finite() {
            return Err(KernelError::invalid("input scale factor must be finite"));
        }
    }

    let mut rng = rng_for(seed, &labels!["toy", "weights"]);
    let w = standard_normal_matrix(&mut rng, x_dim, h_gen, 1.0 / (x_dim as f64).sqrt());
    let v = standard_normal_matrix(&mut rng, h_gen, y_dim, 1.0 / (h_gen as f64).sqrt());

    let split = |name: &str, rows: usize| {
        let mut rng = rng_for(seed, &labels!["toy", name]);
        let x = standard_normal_matrix(&mut rng, rows, x_dim, 1.0);
        let noise = standard_normal_matrix(&mut rng, rows, y_dim, sigma);
        let y = modifier.apply(&x) * &w * &v + noise;
        (x, y)
    };
    let (x, y) = split("train", p);
    let (x_test, y_test) = if n_test > 0 {
        let (xt, yt) = split("test", n_test);
        (Some(xt), Some(yt))
    } else {
        (None, None)
    };
    Ok(ToyDataset { x, y, x_test, y_test, meta: ToyMeta { h_gen, modifier, sigma, seed } })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvidenceEstimate {
    pub log_evidence: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictiveEstimate {
    pub log_prob: f64,
    pub std_error: f64,
    pub effective_sample_size: f64,
    /// Set when the effective sample size is below [`MIN_EFFECTIVE_SAMPLES`].
    pub degenerate_weights: bool,
    pub n_samples: usize,
    pub seed: u64,
}

/// Gaussian likelihood of `Y` under covariance `X G Xᵀ + σ² I`, reduced to
/// the column space of `X` once so that each sample costs `O(r³ + r·Y_dim)`.
#[derive(Debug, Clone)]
struct ProjectedLikelihood {
    /// `V_r diag(s)`: maps `G` to the reduced kernel `bᵀ G b`.
    b: DMatrix<f64>,
    /// `U_rᵀ Y`.
    z: DMatrix<f64>,
    y_sq: f64,
    z_sq: f64,
    p: usize,
    y_dim: usize,
    sigma2: f64,
}

impl ProjectedLikelihood {
    fn new(x: &DMatrix<f64>, y: &DMatrix<f64>, sigma: f64) -> Self {
        let (p, x_dim) = x.shape();
        let svd = x.clone().svd(true, true);
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested Vᵀ");
        let s_max = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| s_max > 0.0 && svd.singular_values[i] > 1e-12 * s_max * (p.max(x_dim) as f64))
            .collect();
        let r = keep.len();
        let mut b = DMatrix::zeros(x_dim, r);
        let mut u_r = DMatrix::zeros(p, r);
        for (k, &i) in keep.iter().enumerate() {
            let s = svd.singular_values[i];
            b.set_column(k, &(v_t.row(i).transpose() * s));
            u_r.set_column(k, &u.column(i));
        }
        let z = u_r.transpose() * y;
        Self { b, y_sq: y.norm_squared(), z_sq: z.norm_squared(), z, p, y_dim: y.ncols(), sigma2: sigma * sigma }
    }

    fn rank(&self) -> usize {
        self.b.ncols()
    }

    /// Log-likelihood summed over output columns, given `G = W Wᵀ / H`.
    fn log_lik(&self, g: &DMatrix<f64>) -> Result<f64> {
        let r = self.rank();
        let (p, yd, s2) = (self.p as f64, self.y_dim as f64, self.sigma2);
        let mut log_det = (p - r as f64) * s2.ln();
        let mut quad = (self.y_sq - self.z_sq).max(0.0) / s2;
        if r > 0 {
            let mut m = self.b.transpose() * g * &self.b;
            for i in 0..r {
                m[(i, i)] += s2;
            }
            let chol = m
                .cholesky()
                .ok_or_else(|| KernelError::singular("reduced evidence covariance is not positive definite"))?;
            log_det += 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let sol = chol.solve(&self.z);
            quad += self.z.dot(&sol);
        }
        Ok(-0.5 * (yd * log_det + quad + p * yd * (2.0 * PI).ln()))
    }
}

/// Draws `G = W Wᵀ / H` for `W` with i.i.d. `N(0, 1/X_dim)` entries.
///
/// Wide layers use the Bartlett decomposition of the Wishart distribution,
/// so the cost does not grow with `H`.
fn draw_first_layer_gram<R: Rng>(rng: &mut R, x_dim: usize, h: usize) -> DMatrix<f64> {
    let scale = 1.0 / (x_dim as f64 * h as f64);
    let a = if h <= x_dim {
        standard_normal_matrix(rng, x_dim, h, 1.0)
    } else {
        let mut a = DMatrix::zeros(x_dim, x_dim);
        for i in 0..x_dim {
            let dof = (h - i) as f64;
            let chi2 = ChiSquared::new(dof).expect("positive degrees of freedom");
            a[(i, i)] = chi2.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        a
    };
    let mut g = &a * a.transpose();
    g *= scale;
    g
}

fn check_mc_args(x: &DMatrix<f64>, y: &DMatrix<f64>, h: usize, sigma: f64, n_samples: usize) -> Result<()> {
    if h == 0 {
        return Err(KernelError::invalid("hidden width must be at least 1"));
    }
    if n_samples < 2 {
        return Err(KernelError::invalid("need at least two Monte Carlo samples"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(KernelError::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if x.nrows() != y.nrows() || x.ncols() == 0 || y.ncols() == 0 || x.nrows() == 0 {
        return Err(KernelError::invalid(format!(
            "shape mismatch: X is {}x{}, Y is {}x{}",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(KernelError::invalid("inputs or targets contain non-finite entries"));
    }
    Ok(())
}

/// Per-sample log-likelihoods for every model in `models`, in sample order.
///
/// Sample `s` draws its weights from `seed_stream(seed, ["mc", s])`, so the
/// values do not depend on how work is split across threads.
fn sample_log_liks(
    models: &[&ProjectedLikelihood],
    x_dim: usize,
    h: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let per_sample: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng_for(seed, &labels!["mc", s]);
            let g = draw_first_layer_gram(&mut rng, x_dim, h);
            models.iter().map(|m| m.log_lik(&g)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok((0..models.len()).map(|k| per_sample.iter().map(|v| v[k]).collect()).collect())
}

/// Log evidence of `Y` under the width-`H` network, by simple Monte Carlo over
/// the prior on first-layer weights.
pub fn mc_log_evidence(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    h: usize,
    sigma: f64,
    n_samples: usize,
    seed: u64,
) -> Result<EvidenceEstimate> {
    check_mc_args(x, y, h, sigma, n_samples)?;
    let model = ProjectedLikelihood::new(x, y, sigma);
    let lls = sample_log_liks(&[&model], x.ncols(), h, n_samples, seed)?;
    let est = log_mean_exp(&lls[0]);
    Ok(EvidenceEstimate { log_evidence: est.log_mean, std_error: est.std_error, n_samples, seed })
}

/// Exact log evidence of the infinitely wide network: every output column is
/// Gaussian with covariance `X Xᵀ / X_dim + σ² I`.
pub fn closed_form_infinite_evidence(x: &DMatrix<f64>, y: &DMatrix<f64>, sigma: f64) -> Result<f64> {
    check_mc_args(x, y, 1, sigma, 2)?;
    let p = x.nrows();
    let mut c = x * x.transpose() / x.ncols() as f64;
    for i in 0..p {
        c[(i, i)] += sigma * sigma;
    }
    gaussian_columns_log_density(c, y)
}

/// `Σ_ν log N(y_ν; 0, C)` via a dense Cholesky factorization.
pub(crate) fn gaussian_columns_log_density(c: DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let p = c.nrows() as f64;
    let n = y.ncols() as f64;
    let chol = c
        .cholesky()
        .ok_or_else(|| KernelError::singular("covariance is not positive definite"))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = y.dot(&chol.solve(y));
    Ok(-0.5 * (quad + n * log_det + n * p * (2.0 * PI).ln()))
}

/// Held-out log-probability `log p(Y_test | Y_train)` by self-normalized
/// importance sampling with the prior as proposal.
///
/// Uses the same per-sample seeds as [`mc_log_evidence`], so the training
/// likelihoods coincide with that estimator's draws.
pub fn mc_predictive_logprob(
    train: &ToyDataset,
    x_test: &DMatrix<f64>,
    y_test: &DMatrix<f64>,
    h: usize,
    sigma: f64,
    n_samples: usize,
    seed: u64,
) -> Result<PredictiveEstimate> {
    check_mc_args(&train.x, &train.y, h, sigma, n_samples)?;
    check_mc_args(x_test, y_test, h, sigma, n_samples)?;
    if x_test.ncols() != train.x.ncols() || y_test.ncols() != train.y.ncols() {
        return Err(KernelError::invalid("test split column dimensions differ from training"));
    }
    let x_all = stack_rows(&train.x, x_test);
    let y_all = stack_rows(&train.y, y_test);
    let train_model = ProjectedLikelihood::new(&train.x, &train.y, sigma);
    let joint_model = ProjectedLikelihood::new(&x_all, &y_all, sigma);
    let lls = sample_log_liks(&[&train_model, &joint_model], train.x.ncols(), h, n_samples, seed)?;
    let (train_ll, joint_ll) = (&lls[0], &lls[1]);

    let lse_train = logsumexp(train_ll);
    let log_prob = logsumexp(joint_ll) - lse_train;
    // Delta method for the ratio estimator Σ w q / Σ w with q = p(test | train, W).
    let var_rel: f64 = train_ll
        .iter()
        .zip(joint_ll)
        .map(|(t, j)| {
            let w = (t - lse_train).exp();
            let q_rel = (j - t - log_prob).exp();
            w * w * (q_rel - 1.0).powi(2)
        })
        .sum();
    let ess = effective_sample_size(train_ll);
    Ok(PredictiveEstimate {
        log_prob,
        std_error: var_rel.sqrt(),
        effective_sample_size: ess,
        degenerate_weights: ess < MIN_EFFECTIVE_SAMPLES,
        n_samples,
        seed,
    })
}

fn stack_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// Sample mean of the first-layer Gram draws; used to check the Wishart sampler.
#[doc(hidden)]
pub fn mean_first_layer_gram(x_dim: usize, h: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(x_dim, x_dim);
    for s in 0..n {
        let mut rng = rng_for(seed, &labels!["mc", s]);
        acc += draw_first_layer_gram(&mut rng, x_dim, h);
    }
    acc / n as f64
}

/// Entrywise second moments `E[G_ij²]` of the first-layer Gram draws.
#[doc(hidden)]
pub fn second_moment_first_layer_gram(x_dim: usize, h: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(x_dim, x_dim);
    for s in 0..n {
        let mut rng = rng_for(seed, &labels!["mc", s]);
        let g = draw_first_layer_gram(&mut rng, x_dim, h);
        acc += g.component_mul(&g);
    }
    acc / n as f64
}
