use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use crate::{run_experiment, ExperimentConfig, ExperimentKind, RunError};

#[derive(Debug, Parser)]
#[command(name = "kernelflow", version, about = "Run kernel experiments from a JSON config")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo evidence of the two-layer toy model over a width grid.
    ToyEvidence(RunArgs),
    /// Prior variance of the top kernel, analytic recursion against sampling.
    PriorVariance(RunArgs),
    /// MAP and Langevin posterior kernel paths.
    PosteriorInterp(RunArgs),
    /// Natural-gradient fit of sum-kernel weights.
    SumkernelFit(RunArgs),
    /// Metrics of one kernel against a reference and labels.
    Metrics(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn configure_threads() -> Result<(), RunError> {
    let Ok(value) = std::env::var("KERNELFLOW_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| RunError::config("KERNELFLOW_THREADS", format!("expected a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| RunError::config("KERNELFLOW_THREADS", e.to_string()))
}

fn run(cli: Cli) -> Result<(), RunError> {
    let (kind, args) = match cli.command {
        Command::ToyEvidence(a) => (ExperimentKind::ToyEvidence, a),
        Command::PriorVariance(a) => (ExperimentKind::PriorVariance, a),
        Command::PosteriorInterp(a) => (ExperimentKind::PosteriorInterp, a),
        Command::SumkernelFit(a) => (ExperimentKind::SumkernelFit, a),
        Command::Metrics(a) => (ExperimentKind::Metrics, a),
    };
    configure_threads()?;
    let mut config = ExperimentConfig::load(&args.config).map_err(|e| match e {
        RunError::Io { path, source } => RunError::config("--config", format!("{}: {source}", path.display())),
        other => other,
    })?;
    if config.experiment != kind {
        return Err(RunError::config(
            "experiment",
            format!("config is for `{}` but the subcommand is `{kind}`", config.experiment),
        ));
    }
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    if let Some(out) = args.out {
        // Relative to the working directory, unlike paths inside the config.
        let out = std::path::absolute(&out).map_err(|e| RunError::config("--out", e.to_string()))?;
        config.output_dir = Some(out);
    }
    let manifest = run_experiment(&config)?;
    let dir = config.resolve(config.output_dir.as_deref().expect("checked by run_experiment"));
    println!("wrote {} files to {}", manifest.files.len(), dir.display());
    Ok(())
}

/// Parses `args` (program name first), runs the experiment and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn run_with(dir: &std::path::Path, subcommand: &str, config: &str) -> i32 {
        let path = dir.join("config.json");
        fs::write(&path, config).unwrap();
        main_with_args(["kernelflow", subcommand, "--config", path.to_str().unwrap()])
    }

    const FIT: &str = r#"{
        "experiment": "sumkernel-fit",
        "output_dir": "OUT",
        "parameters": {
            "components": [{"size": 2, "entries": [1.0, 0.0, 0.0, 1.0]}],
            "targets": [[1.0, 2.0], [0.5, -1.0]]
        }
    }"#;

    #[test]
    fn success_writes_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("out");
        let config = FIT.replace("OUT", out.to_str().unwrap());
        assert_eq!(run_with(tmp.path(), "sumkernel-fit", &config), 0);
        let manifest: crate::Manifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        let names: Vec<_> = manifest.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(names, ["fit.json", "trajectory.csv"]);
        let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
        let keys: Vec<_> = fit.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["converged", "iterations", "lambda", "log_marginal"]);
    }

    #[test]
    fn relative_output_dir_follows_the_config_file() {
        let tmp = tempfile::tempdir().unwrap();
        assert_eq!(run_with(tmp.path(), "sumkernel-fit", &FIT.replace("OUT", "rel")), 0);
        assert!(tmp.path().join("rel/manifest.json").exists());
    }

    #[test]
    fn config_errors_exit_with_two() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("out");
        let config = FIT.replace("OUT", out.to_str().unwrap());
        assert_eq!(run_with(tmp.path(), "metrics", &config), 2);
        let unknown = config.replace("\"targets\"", "\"tragets\"");
        assert_eq!(run_with(tmp.path(), "sumkernel-fit", &unknown), 2);
        assert_eq!(main_with_args(["kernelflow", "sumkernel-fit"]), 2);
        assert!(!out.exists());
    }

    #[test]
    fn numerical_failures_exit_with_three_and_leave_no_output() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("out");
        let config = FIT
            .replace("OUT", out.to_str().unwrap())
            .replace("[1.0, 0.0, 0.0, 1.0]", "[1.0, 1.0, 1.0, 1.0]");
        assert_eq!(run_with(tmp.path(), "sumkernel-fit", &config), 3);
        assert!(!out.exists());
    }

    #[test]
    fn stochastic_experiment_without_seed_is_a_config_error() {
        let tmp = tempfile::tempdir().unwrap();
        let config = format!(
            r#"{{"experiment": "toy-evidence", "output_dir": "{}", "parameters": {{"n_seeds": 1}}}}"#,
            tmp.path().join("out").display()
        );
        assert_eq!(run_with(tmp.path(), "toy-evidence", &config), 2);
    }
}
