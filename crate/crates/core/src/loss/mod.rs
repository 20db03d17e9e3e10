//! Training objective: the diversity-controlling loss over pairs of heads and
//! the mutual-information base loss used for each head on its own.

pub mod diversity;
pub mod mutual_info;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("assignment matrices disagree on shape: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("expected {expected} values, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("clustering index {index} out of range for K={clusterings}")]
    NoSuchClustering { index: usize, clusterings: usize },
    #[error("threshold d={0} outside [0, 1]")]
    ThresholdRange(f64),
}
