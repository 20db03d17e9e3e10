//! Feedback control of the similarity bound `d`.
//!
//! Hard assignments of recent samples are kept in a FIFO [`MemoryBank`].
//! Every `T` steps the mean pairwise NMI of the bank contents, `D^R`, is
//! compared with the target `D^T`: the bound shrinks by a factor `1 − m` when
//! the heads are too similar and grows by `1 + m` otherwise, clamped to
//! `[0, 1]`.

use std::collections::VecDeque;

use thiserror::Error;

use crate::metrics::{mean_pairwise_nmi, MetricsError};

pub const DEFAULT_CAPACITY: usize = 10_000;
pub const DEFAULT_MOMENTUM: f64 = 0.01;
pub const DEFAULT_INTERVAL: u64 = 20;
pub const DEFAULT_WARMUP: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("expected labels for {expected} clusterings, found {found}")]
    ClusteringCount { expected: usize, found: usize },
    #[error("label rows are not aligned: row {row} has {found} entries, expected {expected}")]
    Misaligned { row: usize, expected: usize, found: usize },
    #[error("label {label} in clustering {clustering} is outside [0, {clusters})")]
    LabelRange { clustering: usize, label: usize, clusters: usize },
    #[error("memory bank holds {fill} entries, needs {required} before measuring")]
    NotReady { fill: usize, required: usize },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Per-clustering FIFO buffers of hard labels, aligned by sample.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBank {
    capacity: usize,
    clusters: usize,
    warmup: usize,
    buffers: Vec<VecDeque<usize>>,
}

impl MemoryBank {
    /// Bank for `clusterings` heads with `clusters` labels each. Ready for
    /// measurement once it holds `min(capacity, 1000)` entries.
    pub fn new(clusterings: usize, clusters: usize, capacity: usize) -> Self {
        assert!(capacity > 0 && clusterings > 0);
        Self {
            capacity,
            clusters,
            warmup: capacity.min(DEFAULT_WARMUP),
            buffers: vec![VecDeque::with_capacity(capacity); clusterings],
        }
    }

    /// Override the fill level required by [`measure_similarity`]; clamped to the capacity.
    pub fn with_warmup(mut self, warmup: usize) -> Self {
        self.warmup = warmup.min(self.capacity);
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn fill_count(&self) -> usize {
        self.buffers[0].len()
    }

    pub fn clusterings(&self) -> usize {
        self.buffers.len()
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    pub fn is_ready(&self) -> bool {
        self.fill_count() >= self.warmup
    }

    /// Append one column per sample (`labels[k][j]` is head `k`'s label for
    /// sample `j`), evicting the oldest entries beyond capacity. The bank is
    /// left untouched if any label is invalid.
    pub fn push(&mut self, labels: &[Vec<usize>]) -> Result<(), ControllerError> {
        if labels.len() != self.buffers.len() {
            return Err(ControllerError::ClusteringCount { expected: self.buffers.len(), found: labels.len() });
        }
        let width = labels[0].len();
        for (row, l) in labels.iter().enumerate() {
            if l.len() != width {
                return Err(ControllerError::Misaligned { row, expected: width, found: l.len() });
            }
            if let Some(&label) = l.iter().find(|&&x| x >= self.clusters) {
                return Err(ControllerError::LabelRange { clustering: row, label, clusters: self.clusters });
            }
        }
        for (buffer, l) in self.buffers.iter_mut().zip(labels) {
            for &x in l {
                if buffer.len() == self.capacity {
                    buffer.pop_front();
                }
                buffer.push_back(x);
            }
        }
        Ok(())
    }

    /// Contents of each buffer, oldest first.
    pub fn contents(&self) -> Vec<Vec<usize>> {
        self.buffers.iter().map(|b| b.iter().copied().collect()).collect()
    }
}

/// `D^R`: mean NMI over all unordered pairs of heads on the bank contents.
pub fn measure_similarity(bank: &MemoryBank) -> Result<f64, ControllerError> {
    if !bank.is_ready() {
        return Err(ControllerError::NotReady { fill: bank.fill_count(), required: bank.warmup });
    }
    Ok(mean_pairwise_nmi(&bank.contents())?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdState {
    /// Current bound, always in `[0, 1]`.
    pub d: f64,
    pub momentum: f64,
    pub interval: u64,
    /// Number of updates applied so far.
    pub updates: u64,
}

impl Default for ThresholdState {
    fn default() -> Self {
        Self::new(1.0, DEFAULT_MOMENTUM, DEFAULT_INTERVAL)
    }
}

impl ThresholdState {
    pub fn new(d: f64, momentum: f64, interval: u64) -> Self {
        assert!((0.0..=1.0).contains(&d), "d must lie in [0, 1]");
        assert!(momentum > 0.0 && momentum < 1.0, "momentum must lie in (0, 1)");
        assert!(interval > 0, "update interval must be positive");
        Self { d, momentum, interval, updates: 0 }
    }

    /// One multiplicative step: shrink when `measured > target`, grow otherwise.
    pub fn update_threshold(self, measured: f64, target: f64) -> Self {
        let d = if measured > target {
            (self.d * (1.0 - self.momentum)).max(0.0)
        } else {
            (self.d * (1.0 + self.momentum)).min(1.0)
        };
        Self { d, updates: self.updates + 1, ..self }
    }

    /// Measure and update when `step` is a multiple of the interval and the
    /// bank is ready. Returns the new state and the measured `D^R`, if any.
    pub fn maybe_update(self, bank: &MemoryBank, target: f64, step: u64) -> (Self, Option<f64>) {
        if step % self.interval != 0 {
            return (self, None);
        }
        match measure_similarity(bank) {
            Ok(measured) => (self.update_threshold(measured, target), Some(measured)),
            Err(_) => (self, None),
        }
    }
}
