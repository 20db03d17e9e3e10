//! Run directory layout.
//!
//! ```text
//! config.toml            resolved configuration
//! checkpoint.txt         trained parameters
//! controller_trace.csv   step,d,D_R,D_T
//! loss_curve.csv         step,total,main_mean,div_mean
//! labels_k<k>.csv        sample_index,label per head
//! losses.csv             clustering,loss,confidence
//! truth.csv              ground truth, when the dataset has it
//! consensus_<S>.csv      sample_index,label per strategy
//! pairwise_nmi.csv       K x K, headerless
//! report.json
//! ```

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::consensus::{consensus, select, Ensemble, Strategy};
use crate::data::{load_labels_csv, save_labels_csv, save_matrix_csv, Dataset};
use crate::metrics::pairwise_nmi_matrix;
use crate::model::ModelParams;

use super::{
    assemble_report, evaluate, CurveRow, EvaluationResult, ExperimentConfig, ReportInputs, RunReport, RunnerError,
    Scores, TraceRow, TrainedModel,
};

#[derive(Serialize, Deserialize)]
struct LossRow {
    clustering: usize,
    loss: f64,
    confidence: f64,
}

#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn create(root: impl Into<PathBuf>) -> Result<Self, RunnerError> {
        let dir = Self::new(root);
        std::fs::create_dir_all(&dir.root).map_err(|e| RunnerError::io(&dir.root, e))?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn labels_path(&self, k: usize) -> PathBuf {
        self.path(&format!("labels_k{k}.csv"))
    }

    pub fn consensus_path(&self, strategy: Strategy) -> PathBuf {
        self.path(&format!("consensus_{strategy}.csv"))
    }

    fn require(&self, name: &str) -> Result<PathBuf, RunnerError> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(RunnerError::Incomplete(format!("{} is missing", p.display())))
        }
    }

    pub fn read_config(&self) -> Result<ExperimentConfig, RunnerError> {
        ExperimentConfig::load(&self.require("config.toml")?)
    }

    pub fn read_params(&self) -> Result<ModelParams, RunnerError> {
        Ok(ModelParams::load(&self.require("checkpoint.txt")?)?)
    }

    pub fn write_training(&self, config: &ExperimentConfig, trained: &TrainedModel) -> Result<(), RunnerError> {
        config.save(&self.path("config.toml"))?;
        trained.params.save(&self.path("checkpoint.txt"))?;
        write_rows(&self.path("controller_trace.csv"), &trained.trace, &["step", "d", "D_R", "D_T"])?;
        write_rows(&self.path("loss_curve.csv"), &trained.curve, &["step", "total", "main_mean", "div_mean"])
    }

    pub fn read_trace(&self) -> Result<Vec<TraceRow>, RunnerError> {
        read_rows(&self.require("controller_trace.csv")?)
    }

    pub fn read_curve(&self) -> Result<Vec<CurveRow>, RunnerError> {
        read_rows(&self.require("loss_curve.csv")?)
    }

    pub fn write_evaluation(&self, eval: &EvaluationResult) -> Result<(), RunnerError> {
        for (k, labels) in eval.labels.iter().enumerate() {
            save_labels_csv(&self.labels_path(k), labels)?;
        }
        let rows: Vec<LossRow> = eval
            .losses
            .iter()
            .zip(&eval.confidences)
            .enumerate()
            .map(|(clustering, (&loss, &confidence))| LossRow { clustering, loss, confidence })
            .collect();
        write_rows(&self.path("losses.csv"), &rows, &["clustering", "loss", "confidence"])
    }

    pub fn read_evaluation(&self) -> Result<EvaluationResult, RunnerError> {
        let rows: Vec<LossRow> = read_rows(&self.require("losses.csv")?)?;
        if rows.iter().enumerate().any(|(i, r)| r.clustering != i) || rows.is_empty() {
            return Err(RunnerError::Incomplete("losses.csv rows are not numbered 0..K".into()));
        }
        let mut labels = Vec::with_capacity(rows.len());
        for k in 0..rows.len() {
            let path = self.require(&format!("labels_k{k}.csv"))?;
            labels.push(load_labels_csv(&path)?);
        }
        if let Some((k, l)) = labels.iter().enumerate().find(|(_, l)| l.len() != labels[0].len()) {
            return Err(RunnerError::Incomplete(format!(
                "labels_k{k}.csv has {} samples, labels_k0.csv has {}",
                l.len(),
                labels[0].len()
            )));
        }
        Ok(EvaluationResult {
            labels,
            losses: rows.iter().map(|r| r.loss).collect(),
            confidences: rows.iter().map(|r| r.confidence).collect(),
        })
    }

    pub fn write_truth(&self, dataset: &Dataset) -> Result<(), RunnerError> {
        if let Some(labels) = &dataset.labels {
            save_labels_csv(&self.path("truth.csv"), labels)?;
        }
        Ok(())
    }

    pub fn read_truth(&self) -> Result<Option<Vec<usize>>, RunnerError> {
        let p = self.path("truth.csv");
        if p.is_file() {
            Ok(Some(load_labels_csv(&p)?))
        } else {
            Ok(None)
        }
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), RunnerError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| RunnerError::io(path, e))
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunnerError> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<Result<Vec<T>, _>>()?)
}

/// `train`: writes config, checkpoint and curves, then the evaluation pass.
pub fn train_into(dir: &RunDir, config: &ExperimentConfig, dataset: &Dataset) -> Result<TrainedModel, RunnerError> {
    let trained = super::train(config, dataset)?;
    dir.write_training(config, &trained)?;
    let eval = evaluate(&trained.params, dataset, config.data.noise_sigma, config.seed)?;
    dir.write_evaluation(&eval)?;
    dir.write_truth(dataset)?;
    Ok(trained)
}

/// `evaluate`: reloads the checkpoint and rewrites labels and losses.
/// Without `dataset` the one described by the stored config is used.
pub fn evaluate_dir(dir: &RunDir, dataset: Option<&Dataset>) -> Result<EvaluationResult, RunnerError> {
    let config = dir.read_config()?;
    let params = dir.read_params()?;
    let owned;
    let dataset = match dataset {
        Some(d) => d,
        None => {
            owned = config.dataset()?;
            &owned
        }
    };
    let eval = evaluate(&params, dataset, config.data.noise_sigma, config.seed)?;
    dir.write_evaluation(&eval)?;
    dir.write_truth(dataset)?;
    Ok(eval)
}

/// Outcome of one consensus strategy on a run directory.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusOutcome {
    pub labels: Vec<usize>,
    pub members: Vec<usize>,
    pub scores: Option<Scores>,
}

/// `consensus`: reads the stored labelings and writes `consensus_<S>.csv`.
/// `clusters` defaults to the configured `C`.
pub fn consensus_dir(dir: &RunDir, strategy: Strategy, clusters: Option<usize>) -> Result<ConsensusOutcome, RunnerError> {
    let eval = dir.read_evaluation()?;
    let clusters = match clusters {
        Some(c) => c,
        None => dir.read_config()?.model.clusters,
    };
    let ensemble = Ensemble::new(eval.labels, eval.losses, clusters)?;
    let labels = consensus(&ensemble, strategy)?;
    save_labels_csv(&dir.consensus_path(strategy), &labels)?;
    let scores = dir.read_truth()?.map(|t| Scores::against(&labels, &t)).transpose()?;
    Ok(ConsensusOutcome { members: select(&ensemble, strategy)?, labels, scores })
}

/// `report`: rebuilds the report from stored artifacts and writes
/// `report.json`, `pairwise_nmi.csv` and every strategy's consensus file.
pub fn report_dir(dir: &RunDir) -> Result<RunReport, RunnerError> {
    let config = dir.read_config()?;
    let eval = dir.read_evaluation()?;
    let truth = dir.read_truth()?;
    let trace = dir.read_trace()?;
    let final_bound = trace.last().map_or(config.controller.initial_bound, |r| r.d);
    let (report, labelings) = assemble_report(ReportInputs {
        target: config.controller.target,
        final_bound,
        clusters: config.model.clusters,
        evaluation: &eval,
        truth: truth.as_deref(),
        trace,
        curve: dir.read_curve()?,
    })?;
    for (strategy, labels) in &labelings {
        save_labels_csv(&dir.consensus_path(*strategy), labels)?;
    }
    save_matrix_csv(&dir.path("pairwise_nmi.csv"), &pairwise_nmi_matrix(&eval.labels)?)?;
    let json = dir.path("report.json");
    std::fs::write(&json, report.to_json()).map_err(|e| RunnerError::io(&json, e))?;
    Ok(report)
}
