use serde::{Deserialize, Serialize};

use crate::autodiff::{Bindings, Graph, NodeId, Tensor};
use crate::controller::{MemoryBank, ThresholdState};
use crate::data::{augment, Dataset};
use crate::loss::diversity::build_objective;
use crate::loss::mutual_info::build_mi_loss;
use crate::model::{batch_columns, build_heads, AssignmentMatrix, ModelDims, ModelParams};
use crate::rng::{derive_seed, Stream};

use super::{ExperimentConfig, RunnerError};

const VIEW1: &str = "view1";
const VIEW2: &str = "view2";
const THRESHOLD: &str = "threshold";

/// One controller measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    /// Bound after the update.
    pub d: f64,
    #[serde(rename = "D_R")]
    pub measured: f64,
    #[serde(rename = "D_T")]
    pub target: f64,
}

/// Loss terms of one gradient step, evaluated before the update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: u64,
    pub total: f64,
    pub main_mean: f64,
    pub div_mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub final_bound: f64,
    pub trace: Vec<TraceRow>,
    pub curve: Vec<CurveRow>,
}

/// The objective graph for one batch width, with handles to its terms.
pub struct TrainingGraph {
    pub graph: Graph,
    pub view1_heads: Vec<NodeId>,
    pub main: Vec<NodeId>,
    /// `(k, k', L_div)` for every ordered pair; empty when `K = 1`.
    pub diversity: Vec<(usize, usize, NodeId)>,
    pub total: NodeId,
}

impl TrainingGraph {
    /// Leaves: `view1` and `view2` (`input_dim × width`), `threshold` (`[1]`)
    /// and the model parameters.
    pub fn build(dims: &ModelDims, width: usize) -> Result<Self, RunnerError> {
        let mut graph = Graph::new();
        let x1 = graph.input(VIEW1, &[dims.input_dim, width])?;
        let x2 = graph.input(VIEW2, &[dims.input_dim, width])?;
        let threshold = graph.input(THRESHOLD, &[1])?;
        let view1_heads = build_heads(&mut graph, dims, x1)?;
        let view2_heads = build_heads(&mut graph, dims, x2)?;
        let main = view1_heads
            .iter()
            .zip(&view2_heads)
            .map(|(&a, &b)| build_mi_loss(&mut graph, a, b))
            .collect::<Result<Vec<_>, _>>()?;
        let objective = build_objective(&mut graph, &main, &view1_heads, threshold)?;
        graph.set_output(objective.total)?;
        Ok(Self { graph, view1_heads, main, diversity: objective.diversity, total: objective.total })
    }

    /// Bindings for one step; `view1`/`view2` are `width × input_dim`.
    pub fn bindings(params: &ModelParams, view1: &Tensor, view2: &Tensor, bound: f64) -> Bindings {
        let mut b = Bindings::new();
        params.bind_into(&mut b);
        b.insert(VIEW1.into(), view1.transpose());
        b.insert(VIEW2.into(), view2.transpose());
        b.insert(THRESHOLD.into(), Tensor::scalar(bound));
        b
    }
}

/// Shuffled passes over the sample indices, cut into fixed-width batches.
/// A tail shorter than the batch is dropped and the next pass reshuffled.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    width: usize,
    seed: u64,
    pass: u64,
}

impl BatchSampler {
    fn new(samples: usize, width: usize, seed: u64) -> Self {
        let mut s = Self { order: (0..samples).collect(), cursor: samples, width, seed, pass: 0 };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.sort_unstable();
        Stream::derived(self.seed, "batch-order", self.pass).shuffle(&mut self.order);
        self.pass += 1;
        self.cursor = 0;
    }

    fn next(&mut self) -> &[usize] {
        if self.cursor + self.width > self.order.len() {
            self.reshuffle();
        }
        let start = self.cursor;
        self.cursor += self.width;
        &self.order[start..self.cursor]
    }
}

fn check_finite(step: u64, term: impl FnOnce() -> String, value: f64) -> Result<f64, RunnerError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(RunnerError::Divergence { step, term: term(), value })
    }
}

/// Mini-batch gradient descent on the full objective with the similarity
/// controller in the loop. Ground-truth labels are not read.
pub fn train(config: &ExperimentConfig, dataset: &Dataset) -> Result<TrainedModel, RunnerError> {
    config.validate()?;
    let n = dataset.len();
    let dims = config.model_dims(dataset.dim());
    let mut params = ModelParams::init(derive_seed(config.seed, "model", 0), dims)?;
    let width = config.optimizer.batch_size.min(n);
    let objective = TrainingGraph::build(&dims, width)?;

    let ctl = &config.controller;
    let mut bank = MemoryBank::new(dims.clusterings, dims.clusters, ctl.capacity)
        .with_warmup(ctl.capacity.min(n).min(crate::controller::DEFAULT_WARMUP));
    let mut state = ThresholdState::new(ctl.initial_bound, ctl.momentum, ctl.interval);
    let mut sampler = BatchSampler::new(n, width, derive_seed(config.seed, "batches", 0));
    let mut trace = Vec::new();
    let mut curve = Vec::with_capacity(config.optimizer.steps as usize);
    let noise = config.data.noise_sigma;

    for step in 1..=config.optimizer.steps {
        let indices = sampler.next();
        let view1 = batch_columns(&dataset.features, indices).transpose();
        let view2 = augment(&view1, noise, derive_seed(config.seed, "augment", step));
        let bindings = TrainingGraph::bindings(&params, &view1, &view2, state.d);
        let eval = objective.graph.forward(&bindings)?;

        let total = check_finite(step, || "total".into(), eval.value(objective.total).item())?;
        let mut main_sum = 0.0;
        for (k, &node) in objective.main.iter().enumerate() {
            main_sum += check_finite(step, || format!("main[{k}]"), eval.value(node).item())?;
        }
        let mut div_sum = 0.0;
        for &(k, other, node) in &objective.diversity {
            div_sum += check_finite(step, || format!("div[{k},{other}]"), eval.value(node).item())?;
        }
        curve.push(CurveRow {
            step,
            total,
            main_mean: main_sum / dims.clusterings as f64,
            div_mean: if objective.diversity.is_empty() { 0.0 } else { div_sum / objective.diversity.len() as f64 },
        });

        let hard: Vec<Vec<usize>> = objective
            .view1_heads
            .iter()
            .enumerate()
            .map(|(k, &h)| AssignmentMatrix::new(eval.value(h).clone(), k).hard_labels())
            .collect();
        let grads = eval.backward()?;
        for (name, g) in grads.iter() {
            if !g.is_finite() {
                return Err(RunnerError::Divergence { step, term: format!("gradient of {name}"), value: f64::NAN });
            }
        }
        params.descend(&grads, config.optimizer.learning_rate);

        bank.push(&hard)?;
        let (next, measured) = state.maybe_update(&bank, ctl.target, step);
        state = next;
        if let Some(measured) = measured {
            trace.push(TraceRow { step, d: state.d, measured, target: ctl.target });
        }
    }
    Ok(TrainedModel { params, final_bound: state.d, trace, curve })
}
