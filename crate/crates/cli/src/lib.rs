//! Config-driven experiment runner for the cut-off laboratory.

pub mod config;
pub mod experiments;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{load_config, parse_config, validate_config, ExperimentConfig, Violation};
pub use experiments::{Experiment, Outcome};
pub use report::Summary;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("config has {} violation(s):\n{}", .0.len(), .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Run(#[from] experiments::RunError),
    #[error("cannot build the model: {0}")]
    Model(cutofflab_core::Error),
    #[error("cannot write outputs to {dir}: {source}")]
    Output { dir: String, source: std::io::Error },
    #[error("cannot start the worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// A finished run: the measured outcome, its summary and where both were written.
#[derive(Debug)]
pub struct RunReport {
    pub outcome: Outcome,
    pub summary: Summary,
    pub out_dir: PathBuf,
}

/// Validates, runs on `workers` threads, and writes `results.csv` and `summary.json`.
pub fn run_experiment(
    config: &ExperimentConfig,
    config_hash: String,
    out_dir: &Path,
    workers: Option<usize>,
) -> Result<RunReport, CliError> {
    let violations = validate_config(config);
    if !violations.is_empty() {
        return Err(CliError::Invalid(violations));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool.build()?;
    let start = Instant::now();
    let outcome = pool.install(|| -> Result<Outcome, CliError> {
        let model = config::build_spectral_model(&config.model).map_err(CliError::Model)?;
        let family = config::build_family(&model, &config.family).map_err(CliError::Model)?;
        Ok(experiments::run(config, &model, &family)?)
    })?;
    let elapsed = start.elapsed().as_secs_f64();
    let summary = report::summarize(config.experiment, config_hash, &config.criteria, &outcome, elapsed);
    report::write_outputs(out_dir, &outcome, &summary)
        .map_err(|source| CliError::Output { dir: out_dir.display().to_string(), source })?;
    Ok(RunReport { outcome, summary, out_dir: out_dir.to_path_buf() })
}

/// `name`, anchor, description and required params, one block per experiment.
pub fn experiment_listing() -> String {
    let mut text = String::new();
    for exp in Experiment::ALL {
        text.push_str(&format!(
            "{}\n  anchor: {}\n  measures: {}\n  required params: {}\n",
            exp.name(),
            exp.anchor(),
            exp.description(),
            exp.required_params().join(", ")
        ));
    }
    text
}
