use kernelflow_core::prior::{default_displacements, make_input_state, SamplerInput};
use kernelflow_core::{
    fc_cov_recursion, labels, sample_finite_network_kernels, seed_stream, spatial_cov_recursion, ArchitectureSpec,
    KernelMatrix, NetworkKind, RecursionMode,
};
use serde::Deserialize;

use crate::config::ExperimentConfig;
use crate::error::{RunError, RunResult};
use crate::output::{Artifact, Csv};
use crate::row;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorVarianceParams {
    #[serde(default = "fc_only")]
    pub kinds: Vec<NetworkKind>,
    /// Widths `N` of every layer.
    pub widths: Vec<usize>,
    /// Total depth `L + 1`, readout included.
    pub depths: Vec<usize>,
    #[serde(default = "both")]
    pub structured: Vec<bool>,
    #[serde(default = "default_sizes")]
    pub spatial_sizes: Vec<usize>,
    #[serde(default = "default_networks")]
    pub n_networks: usize,
    #[serde(default = "default_channels")]
    pub input_channels: usize,
    #[serde(default = "default_displacements")]
    pub displacements: Vec<i64>,
    #[serde(default = "exact")]
    pub mode: RecursionMode,
}

fn fc_only() -> Vec<NetworkKind> {
    vec![NetworkKind::Fc]
}
fn both() -> Vec<bool> {
    vec![true, false]
}
fn default_sizes() -> Vec<usize> {
    vec![32]
}
fn default_networks() -> usize {
    10_000
}
fn default_channels() -> usize {
    16
}
fn exact() -> RecursionMode {
    RecursionMode::Exact
}

pub const COLUMNS: [&str; 8] = ["kind", "structured", "S", "N", "depth", "analytic_var", "mc_var", "mc_se"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceRow {
    pub analytic: f64,
    pub mc: f64,
    pub mc_se: f64,
}

/// Analytic and sampled variance of the top kernel for one configuration.
/// FC networks see a single datapoint with unit input kernel.
pub fn variance_row(
    kind: NetworkKind,
    structured: bool,
    s: usize,
    n: usize,
    depth: usize,
    params: &PriorVarianceParams,
    root: u64,
) -> RunResult<VarianceRow> {
    let net_seed = seed_stream(root, &labels!["prior-variance", kind.as_str(), structured as u64, s, n, depth]);
    match kind {
        NetworkKind::Fc => {
            let l0 = KernelMatrix::identity(1);
            let widths = vec![n; depth];
            let analytic = fc_cov_recursion(&l0, &widths, params.mode)?.variance(0, 0);
            let spec = ArchitectureSpec::fc(widths);
            let mc = sample_finite_network_kernels(&spec, SamplerInput::Kernel(&l0), params.n_networks, net_seed)?;
            Ok(VarianceRow { analytic, mc: mc.variance[(0, 0)], mc_se: mc.variance_se[(0, 0)] })
        }
        NetworkKind::Cnn | NetworkKind::Lcn => {
            let input_seed = seed_stream(root, &labels!["prior-variance", "input", s]);
            let input = make_input_state(structured, s, params.input_channels, input_seed)?;
            let mut spec = ArchitectureSpec::spatial(kind, depth, n, s, params.input_channels);
            spec.displacements = params.displacements.clone();
            let analytic = spatial_cov_recursion(&input.realized(), &spec, params.mode)?.final_variance;
            let mc = sample_finite_network_kernels(&spec, SamplerInput::Activities(&input.raw), params.n_networks, net_seed)?;
            Ok(VarianceRow { analytic, mc: mc.variance[(0, 0)], mc_se: mc.variance_se[(0, 0)] })
        }
    }
}

pub fn run(config: &ExperimentConfig) -> RunResult<Vec<Artifact>> {
    let params: PriorVarianceParams = config.parameters()?;
    let root = config.require_seed()?;
    if params.widths.is_empty() || params.depths.is_empty() || params.kinds.is_empty() {
        return Err(RunError::config("parameters", "kinds, widths and depths must be non-empty"));
    }
    if params.depths.contains(&0) {
        return Err(RunError::config("parameters.depths", "depth counts the readout layer and must be at least 1"));
    }
    let mut csv = Csv::new(&COLUMNS);
    for &kind in &params.kinds {
        let (structured, sizes) = match kind {
            NetworkKind::Fc => (vec![false], vec![1]),
            _ => (params.structured.clone(), params.spatial_sizes.clone()),
        };
        for &st in &structured {
            for &s in &sizes {
                for &n in &params.widths {
                    for &depth in &params.depths {
                        let r = variance_row(kind, st, s, n, depth, &params, root)?;
                        csv.row(row![kind.as_str(), st, s, n, depth, r.analytic, r.mc, r.mc_se]);
                    }
                }
            }
        }
    }
    Ok(vec![csv.into_artifact("variance.csv")])
}
