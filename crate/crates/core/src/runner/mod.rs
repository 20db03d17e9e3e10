//! Training, evaluation and reporting for complete experiments.
//!
//! [`run_experiment`] does everything in memory; [`artifacts`] holds the
//! on-disk layout used by the command-line tool, where each stage reads what
//! the previous one wrote.

pub mod artifacts;
mod config;
mod evaluate;
mod report;
mod train;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

pub use config::{ControllerConfig, DataConfig, ExperimentConfig, ModelConfig, OptimizerConfig};
pub use evaluate::{evaluate, EvaluationResult};
pub use report::{assemble_report, ClusteringSummary, ReportInputs, RunReport, Scores, StrategySummary};
pub use train::{train, CurveRow, TraceRow, TrainedModel, TrainingGraph};

use crate::autodiff::EngineError;
use crate::consensus::{ConsensusError, Strategy};
use crate::controller::ControllerError;
use crate::data::{DataError, Dataset};
use crate::loss::LossError;
use crate::metrics::MetricsError;
use crate::model::ModelError;

/// Caps the number of concurrent runs in [`run_sweep`].
pub const MAX_WORKERS_ENV: &str = "DIVCLUST_MAX_WORKERS";

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite {term} at step {step} (value {value})")]
    Divergence { step: u64, term: String, value: f64 },
    #[error("incomplete run directory: {0}")]
    Incomplete(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl RunnerError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

/// Result of [`run_experiment`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub trained: TrainedModel,
    pub evaluation: EvaluationResult,
    pub report: RunReport,
    pub consensus: Vec<(Strategy, Vec<usize>)>,
}

/// Train, evaluate and summarise without touching the filesystem.
pub fn run_experiment(config: &ExperimentConfig, dataset: &Dataset) -> Result<RunOutcome, RunnerError> {
    let trained = train(config, dataset)?;
    let evaluation = evaluate(&trained.params, dataset, config.data.noise_sigma, config.seed)?;
    let (report, consensus) = assemble_report(ReportInputs {
        target: config.controller.target,
        final_bound: trained.final_bound,
        clusters: config.model.clusters,
        evaluation: &evaluation,
        truth: dataset.labels.as_deref(),
        trace: trained.trace.clone(),
        curve: trained.curve.clone(),
    })?;
    Ok(RunOutcome { trained, evaluation, report, consensus })
}

/// Worker count from [`MAX_WORKERS_ENV`], else the available parallelism.
pub fn max_workers() -> usize {
    std::env::var(MAX_WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs independent experiments on up to `workers` threads. Each config
/// builds its own dataset; results come back in input order.
pub fn run_sweep(configs: &[ExperimentConfig], workers: usize) -> Vec<Result<RunOutcome, RunnerError>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunOutcome, RunnerError>>>> =
        Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, configs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(config) = configs.get(i) else { break };
                let outcome = config.dataset().and_then(|data| run_experiment(config, &data));
                results.lock().unwrap()[i] = Some(outcome);
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("every index is claimed")).collect()
}
