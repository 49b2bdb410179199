use kernelflow_core::toy::{default_h_grid, DEFAULT_N_SAMPLES, DEFAULT_SIGMA};
use kernelflow_core::{
    closed_form_infinite_evidence, generate_toy_dataset, labels, mc_log_evidence, seed_stream, InputModifier, ToyConfig,
};
use serde::Deserialize;

use crate::config::ExperimentConfig;
use crate::error::{RunError, RunResult};
use crate::output::{Artifact, Csv};
use crate::row;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyEvidenceParams {
    pub p: usize,
    pub x_dim: usize,
    pub y_dim: usize,
    pub sigma: f64,
    pub n_samples: usize,
    pub h_grid: Vec<usize>,
    pub h_gen: Vec<usize>,
    pub n_seeds: usize,
    pub modifier: InputModifier,
    /// Also write the infinite-width closed form per dataset.
    pub infinite: bool,
}

impl Default for ToyEvidenceParams {
    fn default() -> Self {
        Self {
            p: 20,
            x_dim: 4,
            y_dim: 10,
            sigma: DEFAULT_SIGMA,
            n_samples: DEFAULT_N_SAMPLES,
            h_grid: default_h_grid(),
            h_gen: vec![1, 2, 4],
            n_seeds: 10,
            modifier: InputModifier::None,
            infinite: true,
        }
    }
}

/// Dataset and MC seeds for one `(H_gen, seed index)` cell. The MC stream is
/// shared across the H grid so that evidence differences use common draws.
pub fn cell_seeds(root: u64, h_gen: usize, seed_index: usize) -> (u64, u64) {
    (
        seed_stream(root, &labels!["toy-evidence", "data", h_gen, seed_index]),
        seed_stream(root, &labels!["toy-evidence", "mc", h_gen, seed_index]),
    )
}

pub fn run(config: &ExperimentConfig) -> RunResult<Vec<Artifact>> {
    let params: ToyEvidenceParams = config.parameters()?;
    let root = config.require_seed()?;
    if params.h_grid.is_empty() || params.h_gen.is_empty() || params.n_seeds == 0 {
        return Err(RunError::config("parameters", "h_grid, h_gen and n_seeds must be non-empty"));
    }
    let modifier = params.modifier.label();
    let mut evidence = Csv::new(&["modifier", "h_gen", "seed_index", "h", "log_evidence", "std_error", "n_samples"]);
    let mut infinite = Csv::new(&["modifier", "h_gen", "seed_index", "log_evidence"]);
    let mut seeds = Csv::new(&["h_gen", "seed_index", "data_seed", "mc_seed"]);
    for &h_gen in &params.h_gen {
        for seed_index in 0..params.n_seeds {
            let (data_seed, mc_seed) = cell_seeds(root, h_gen, seed_index);
            seeds.row(row![h_gen, seed_index, data_seed, mc_seed]);
            let toy = ToyConfig {
                p: params.p,
                x_dim: params.x_dim,
                y_dim: params.y_dim,
                h_gen,
                sigma: params.sigma,
                modifier: params.modifier,
                n_test: 0,
            };
            let data = generate_toy_dataset(data_seed, &toy)?;
            for &h in &params.h_grid {
                let est = mc_log_evidence(&data.x, &data.y, h, params.sigma, params.n_samples, mc_seed)?;
                evidence.row(row![modifier.as_str(), h_gen, seed_index, h, est.log_evidence, est.std_error, est.n_samples]);
            }
            if params.infinite {
                let exact = closed_form_infinite_evidence(&data.x, &data.y, params.sigma)?;
                infinite.row(row![modifier.as_str(), h_gen, seed_index, exact]);
            }
        }
    }
    let mut out = vec![evidence.into_artifact("evidence.csv"), seeds.into_artifact("seeds.csv")];
    if params.infinite {
        out.push(infinite.into_artifact("infinite.csv"));
    }
    Ok(out)
}
