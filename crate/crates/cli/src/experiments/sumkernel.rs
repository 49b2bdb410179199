use kernelflow_core::sumkernel::DEFAULT_LAMBDA_MIN;
use kernelflow_core::{natural_gradient_fit, FitOptions, KernelMatrix, SumKernelModel};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::config::ExperimentConfig;
use crate::error::{RunError, RunResult};
use crate::output::{Artifact, Csv};
use crate::row;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SumKernelParams {
    pub components: Vec<KernelMatrix>,
    /// `P` rows of `N` output values.
    pub targets: Vec<Vec<f64>>,
    #[serde(default)]
    pub initial_weights: Option<Vec<f64>>,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub damping: Option<f64>,
    #[serde(default = "default_floor")]
    pub lambda_min: f64,
}

fn default_iters() -> usize {
    200
}
fn default_tol() -> f64 {
    1e-8
}
fn default_floor() -> f64 {
    DEFAULT_LAMBDA_MIN
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>], field: &str) -> RunResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(RunError::config(field, "expected a non-empty rectangular array of rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn run(config: &ExperimentConfig) -> RunResult<Vec<Artifact>> {
    let params: SumKernelParams = config.parameters()?;
    let y = rows_to_matrix(&params.targets, "parameters.targets")?;
    let weights = params.initial_weights.clone().unwrap_or_else(|| vec![1.0; params.components.len()]);
    let model = SumKernelModel::with_floor(params.components.clone(), weights, params.lambda_min)?;
    let options = FitOptions { max_iters: params.max_iters, tol: params.tol, damping: params.damping };
    let (_, report) = natural_gradient_fit(&model, &y, options)?;
    let mut trajectory = Csv::new(&["iteration", "component", "lambda", "log_marginal"]);
    for (it, (lambda, value)) in report.trajectory.iter().enumerate() {
        for (c, l) in lambda.iter().enumerate() {
            trajectory.row(row![it, c, *l, *value]);
        }
    }
    Ok(vec![Artifact::json("fit.json", &report), trajectory.into_artifact("trajectory.csv")])
}
