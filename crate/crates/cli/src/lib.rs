//! Experiment runner: JSON configs in, CSV/JSON artifacts and a digest manifest out.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;


pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{RunError, RunResult};
pub use output::{Artifact, Manifest, ManifestEntry};

/// Runs the experiment in memory and returns its artifacts without writing them.
pub fn compute_artifacts(config: &ExperimentConfig) -> RunResult<Vec<Artifact>> {
    match config.experiment {
        ExperimentKind::ToyEvidence => experiments::toy::run(config),
        ExperimentKind::PriorVariance => experiments::prior::run(config),
        ExperimentKind::PosteriorInterp => experiments::posterior::run(config),
        ExperimentKind::SumkernelFit => experiments::sumkernel::run(config),
        ExperimentKind::Metrics => experiments::metrics::run(config),
    }
}

/// Runs the experiment and writes its artifacts plus `manifest.json` to `output_dir`.
///
/// A relative `output_dir` is taken relative to the config file's directory.
pub fn run_experiment(config: &ExperimentConfig) -> RunResult<Manifest> {
    let dir = config
        .output_dir
        .as_deref()
        .map(|d| config.resolve(d))
        .ok_or_else(|| RunError::config("output_dir", "no output directory given in the config or with --out"))?;
    let artifacts = compute_artifacts(config)?;
    output::write_artifacts(&dir, config.experiment.as_str(), config.seed, &artifacts)
}
