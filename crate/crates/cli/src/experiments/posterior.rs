use std::collections::BTreeMap;

use kernelflow_core::posterior::SdeInit;
use kernelflow_core::{
    langevin_kernel_path, langevin_simulate, map_kernel_path, objective_and_residual, KernelMatrix, KernelPath,
    PathMethod, SdeConfig, WidthProfile,
};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{RunError, RunResult};
use crate::output::{Artifact, Csv};
use crate::row;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorParams {
    pub k0: KernelMatrix,
    pub k_out: KernelMatrix,
    /// `N_1 … N_L` followed by the output count `Y`.
    pub widths: Vec<usize>,
    #[serde(default = "both_methods")]
    pub methods: Vec<PathMethod>,
    #[serde(default)]
    pub sde: Option<SdeParams>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeParams {
    pub dt: f64,
    pub n_steps: usize,
    pub burn_in: usize,
}

fn both_methods() -> Vec<PathMethod> {
    vec![PathMethod::Map, PathMethod::Langevin]
}

#[derive(Debug, Serialize)]
struct PathSummary<'a> {
    diagnostics: &'a kernelflow_core::posterior::PathDiagnostics,
    objective: f64,
    residual: f64,
}

fn method_name(m: PathMethod) -> &'static str {
    match m {
        PathMethod::Map => "map",
        PathMethod::Langevin => "langevin",
    }
}

/// Uniform hidden width and output count, as the Langevin closed form needs.
fn uniform_widths(widths: &[usize]) -> RunResult<(usize, usize, usize)> {
    let (&y, hidden) = widths.split_last().expect("validated non-empty");
    let n = hidden[0];
    if hidden.iter().any(|&w| w != n) {
        return Err(RunError::config("parameters.widths", "Langevin paths need equal hidden widths"));
    }
    Ok((n, y, hidden.len()))
}

pub fn run(config: &ExperimentConfig) -> RunResult<Vec<Artifact>> {
    let params: PosteriorParams = config.parameters()?;
    if params.widths.len() < 2 {
        return Err(RunError::config("parameters.widths", "need at least one hidden width and the output count"));
    }
    let profile = WidthProfile::new(params.widths.clone())?;
    let mut csv = Csv::new(&["method", "layer", "row", "col", "value"]);
    let mut paths: Vec<KernelPath> = Vec::new();
    for &method in &params.methods {
        let path = match method {
            PathMethod::Map => map_kernel_path(&params.k0, &params.k_out, &profile)?,
            PathMethod::Langevin => {
                let (n, y, l) = uniform_widths(&params.widths)?;
                langevin_kernel_path(&params.k0, &params.k_out, n, y, l)?
            }
        };
        for (layer, k) in path.kernels.iter().enumerate() {
            let m = k.entries();
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    csv.row(row![method_name(method), layer, i, j, m[(i, j)]]);
                }
            }
        }
        paths.push(path);
    }
    let mut summaries = BTreeMap::new();
    for path in &paths {
        let report = objective_and_residual(path, &profile, path.method)?;
        summaries.insert(
            method_name(path.method),
            PathSummary { diagnostics: &path.diagnostics, objective: report.objective, residual: report.residual },
        );
    }
    let mut out = vec![csv.into_artifact("path.csv"), Artifact::json("diagnostics.json", &summaries)];

    if let Some(sde) = &params.sde {
        let seed = config.require_seed()?;
        let (n, y, l) = uniform_widths(&params.widths)?;
        let result = langevin_simulate(&SdeConfig {
            k0: params.k0.clone(),
            k_out: Some(params.k_out.clone()),
            n,
            y,
            l,
            dt: sde.dt,
            n_steps: sde.n_steps,
            burn_in: sde.burn_in,
            seed,
            init: SdeInit::PriorDraw,
        })?;
        let mut sim = Csv::new(&["layer", "row", "col", "mean_k", "k_se", "mean_r", "r_se"]);
        for layer in 0..l {
            let (k, ks, r, rs) = (&result.mean_k[layer], &result.k_se[layer], &result.mean_r[layer], &result.r_se[layer]);
            for i in 0..k.nrows() {
                for j in 0..k.ncols() {
                    sim.row(row![layer + 1, i, j, k[(i, j)], ks[(i, j)], r[(i, j)], rs[(i, j)]]);
                }
            }
        }
        out.push(sim.into_artifact("sde.csv"));
    }
    Ok(out)
}
