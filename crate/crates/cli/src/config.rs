use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{RunError, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ToyEvidence,
    PriorVariance,
    PosteriorInterp,
    SumkernelFit,
    Metrics,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::ToyEvidence => "toy-evidence",
            ExperimentKind::PriorVariance => "prior-variance",
            ExperimentKind::PosteriorInterp => "posterior-interp",
            ExperimentKind::SumkernelFit => "sumkernel-fit",
            ExperimentKind::Metrics => "metrics",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "empty_table")]
    pub parameters: serde_json::Value,
    /// Directory that relative paths inside `parameters` are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn empty_table() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl ExperimentConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> RunResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            RunError::config(path, e.into_inner().to_string())
        })?;
        config.base_dir = base_dir.into();
        Ok(config)
    }

    pub fn load(path: &Path) -> RunResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    /// Typed parameters; error paths are reported under `parameters`.
    pub fn parameters<T: DeserializeOwned>(&self) -> RunResult<T> {
        serde_path_to_error::deserialize(self.parameters.clone()).map_err(|e| {
            let inner = e.path().to_string();
            let path = if inner == "." { "parameters".to_string() } else { format!("parameters.{inner}") };
            RunError::config(path, e.into_inner().to_string())
        })
    }

    pub fn require_seed(&self) -> RunResult<u64> {
        self.seed.ok_or_else(|| RunError::config("seed", format!("{} is stochastic and needs a seed", self.experiment)))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}
