use crate::data::{augment, Dataset};
use crate::loss::mutual_info::{joint_distribution, mi_loss};
use crate::model::{forward, ModelParams};
use crate::rng::derive_seed;

use super::RunnerError;

/// Frozen-parameter pass over a whole dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationResult {
    /// Hard labels per head, ties to the lowest cluster index.
    pub labels: Vec<Vec<usize>>,
    /// Base loss per head on the full clean/augmented view pair.
    pub losses: Vec<f64>,
    /// Mean largest assignment probability per head.
    pub confidences: Vec<f64>,
}

impl EvaluationResult {
    pub fn cnf(&self) -> f64 {
        self.confidences.iter().sum::<f64>() / self.confidences.len() as f64
    }
}

/// The augmented view uses a seed fixed by `seed`, so repeated evaluations of
/// one checkpoint agree exactly.
pub fn evaluate(params: &ModelParams, dataset: &Dataset, noise_sigma: f64, seed: u64) -> Result<EvaluationResult, RunnerError> {
    let clean = forward(params, &dataset.features)?;
    let noisy = forward(params, &augment(&dataset.features, noise_sigma, derive_seed(seed, "eval-augment", 0)))?;
    let mut losses = Vec::with_capacity(clean.len());
    for (a, b) in clean.iter().zip(&noisy) {
        losses.push(mi_loss(&joint_distribution(a, b)?));
    }
    Ok(EvaluationResult {
        labels: clean.iter().map(|a| a.hard_labels()).collect(),
        losses,
        confidences: clean.iter().map(|a| a.confidences().iter().sum::<f64>() / a.samples() as f64).collect(),
    })
}
