use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::consensus::{consensus, select, Ensemble, Strategy};
use crate::metrics::{accuracy, ari, mean_pairwise_nmi, nmi};

use super::evaluate::EvaluationResult;
use super::train::{CurveRow, TraceRow};
use super::RunnerError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

impl Scores {
    pub fn against(pred: &[usize], truth: &[usize]) -> Result<Self, RunnerError> {
        Ok(Self { acc: accuracy(pred, truth)?, nmi: nmi(pred, truth)?, ari: ari(pred, truth)? })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSummary {
    pub index: usize,
    pub loss: f64,
    pub confidence: f64,
    /// Absent when the dataset has no ground truth.
    pub scores: Option<Scores>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    /// Heads the strategy drew on.
    pub members: Vec<usize>,
    pub scores: Option<Scores>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub target: f64,
    pub final_bound: f64,
    /// Mean pairwise NMI of the heads' labels on the full dataset.
    pub measured_similarity: f64,
    pub cnf: f64,
    pub mean_acc: Option<f64>,
    pub max_acc: Option<f64>,
    pub clusterings: Vec<ClusteringSummary>,
    pub consensus: Vec<StrategySummary>,
    pub trace: Vec<TraceRow>,
    pub curve: Vec<CurveRow>,
}

/// Inputs shared by the in-memory and on-disk report paths.
pub struct ReportInputs<'a> {
    pub target: f64,
    pub final_bound: f64,
    pub clusters: usize,
    pub evaluation: &'a EvaluationResult,
    pub truth: Option<&'a [usize]>,
    pub trace: Vec<TraceRow>,
    pub curve: Vec<CurveRow>,
}

/// Builds the report and the consensus labeling of every strategy.
pub fn assemble_report(inputs: ReportInputs<'_>) -> Result<(RunReport, Vec<(Strategy, Vec<usize>)>), RunnerError> {
    let eval = inputs.evaluation;
    let score = |labels: &[usize]| inputs.truth.map(|t| Scores::against(labels, t)).transpose();

    let mut clusterings = Vec::with_capacity(eval.labels.len());
    for (index, labels) in eval.labels.iter().enumerate() {
        clusterings.push(ClusteringSummary {
            index,
            loss: eval.losses[index],
            confidence: eval.confidences[index],
            scores: score(labels)?,
        });
    }
    let accs: Option<Vec<f64>> = clusterings.iter().map(|c| c.scores.map(|s| s.acc)).collect();
    let mean_acc = accs.as_ref().map(|a| a.iter().sum::<f64>() / a.len() as f64);
    let max_acc = accs.as_ref().map(|a| a.iter().copied().fold(f64::NEG_INFINITY, f64::max));

    let ensemble = Ensemble::new(eval.labels.clone(), eval.losses.clone(), inputs.clusters)?;
    let mut summaries = Vec::new();
    let mut labelings = Vec::new();
    for strategy in Strategy::ALL {
        let labels = consensus(&ensemble, strategy)?;
        summaries.push(StrategySummary {
            strategy: strategy.to_string(),
            members: select(&ensemble, strategy)?,
            scores: score(&labels)?,
        });
        labelings.push((strategy, labels));
    }

    let report = RunReport {
        target: inputs.target,
        final_bound: inputs.final_bound,
        measured_similarity: mean_pairwise_nmi(&eval.labels)?,
        cnf: eval.cnf(),
        mean_acc,
        max_acc,
        clusterings,
        consensus: summaries,
        trace: inputs.trace,
        curve: inputs.curve,
    };
    Ok((report, labelings))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

impl RunReport {
    pub fn consensus_scores(&self, strategy: Strategy) -> Option<Scores> {
        let name = strategy.to_string();
        self.consensus.iter().find(|s| s.strategy == name).and_then(|s| s.scores)
    }

    pub fn per_clustering_acc(&self) -> Option<Vec<f64>> {
        self.clusterings.iter().map(|c| c.scores.map(|s| s.acc)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Plain-text summary. Numbers use the same shortest round-trip form as
    /// the JSON, so both agree digit for digit.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, k: &str, v: String| {
            let _ = writeln!(out, "{k:<16} {v}");
        };
        row(&mut out, "D_T", self.target.to_string());
        row(&mut out, "D_R", self.measured_similarity.to_string());
        row(&mut out, "d (final)", self.final_bound.to_string());
        row(&mut out, "CNF", self.cnf.to_string());
        row(&mut out, "mean ACC", cell(self.mean_acc));
        row(&mut out, "max ACC", cell(self.max_acc));
        for s in &self.consensus {
            row(&mut out, &format!("DivClust {} ACC", s.strategy), cell(s.scores.map(|x| x.acc)));
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<6} {:<22} {:<22} {:<22} {:<22} {}", "head", "loss", "CNF", "ACC", "NMI", "ARI");
        for c in &self.clusterings {
            let _ = writeln!(
                out,
                "{:<6} {:<22} {:<22} {:<22} {:<22} {}",
                c.index,
                c.loss,
                c.confidence,
                cell(c.scores.map(|s| s.acc)),
                cell(c.scores.map(|s| s.nmi)),
                cell(c.scores.map(|s| s.ari)),
            );
        }
        out
    }
}
