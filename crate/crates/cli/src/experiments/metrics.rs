use std::path::{Path, PathBuf};

use kernelflow_core::metrics::DEFAULT_DROP_COUNT;
use kernelflow_core::{metric_report, one_hot, KernelMatrix};
use serde::Deserialize;

use crate::config::ExperimentConfig;
use crate::error::{RunError, RunResult};
use crate::output::Artifact;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsParams {
    /// Kernel whose metrics are reported.
    pub kernel_a: PathBuf,
    /// Reference kernel for the correlation.
    pub kernel_b: PathBuf,
    /// CSV with header `index,class`.
    pub labels: PathBuf,
    #[serde(default = "default_drop")]
    pub drop_count: usize,
}

fn default_drop() -> usize {
    DEFAULT_DROP_COUNT
}

fn read_kernel(path: &Path, field: &str) -> RunResult<KernelMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| RunError::config(format!("{field} ({}): {}", path.display(), e.path()), e.into_inner().to_string()))
}

/// Parses `index,class` rows; indices must cover `0..P` exactly once.
pub fn parse_labels(text: &str) -> RunResult<Vec<usize>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next().map(str::trim) {
        Some("index,class") => {}
        other => return Err(RunError::config("labels", format!("expected header `index,class`, found {other:?}"))),
    }
    let mut pairs = Vec::new();
    for (n, line) in lines.enumerate() {
        let bad = || RunError::config("labels", format!("line {}: expected `index,class`, found `{line}`", n + 2));
        let (i, c) = line.trim().split_once(',').ok_or_else(bad)?;
        pairs.push((i.trim().parse::<usize>().map_err(|_| bad())?, c.trim().parse::<usize>().map_err(|_| bad())?));
    }
    let mut labels = vec![None; pairs.len()];
    for (i, c) in pairs {
        match labels.get_mut(i) {
            Some(slot @ None) => *slot = Some(c),
            _ => return Err(RunError::config("labels", format!("index {i} is duplicated or out of range"))),
        }
    }
    Ok(labels.into_iter().map(|c| c.expect("every index filled")).collect())
}

pub fn run(config: &ExperimentConfig) -> RunResult<Vec<Artifact>> {
    let params: MetricsParams = config.parameters()?;
    let ka = read_kernel(&config.resolve(&params.kernel_a), "parameters.kernel_a")?;
    let kb = read_kernel(&config.resolve(&params.kernel_b), "parameters.kernel_b")?;
    let label_path = config.resolve(&params.labels);
    let text = std::fs::read_to_string(&label_path).map_err(|e| RunError::io(&label_path, e))?;
    let labels = parse_labels(&text)?;
    if labels.len() != ka.size() {
        return Err(RunError::config("parameters.labels", format!("{} labels for {} points", labels.len(), ka.size())));
    }
    let classes = labels.iter().max().map_or(0, |c| c + 1);
    let y = one_hot(&labels, classes)?;
    let report = metric_report(&ka, &kb, &y, params.drop_count)?;
    Ok(vec![Artifact::json("metrics.json", &report)])
}
