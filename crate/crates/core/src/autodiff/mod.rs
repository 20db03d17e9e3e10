//! A small reverse-mode differentiation engine over dense `f64` arrays.
//!
//! Graphs are built once with static shapes and then evaluated any number of
//! times against fresh [`Bindings`]. All arithmetic is double precision and
//! the only broadcasting is multiplication by a constant ([`Graph::scale`]);
//! bias terms are expressed as outer products with a constant row of ones.
//!
//! Non-smooth primitives use fixed subgradients: the hinge and `clamp_min`
//! pass no gradient at the kink, and `row_max` routes the gradient to the
//! lowest-index maximiser of each row.

mod graph;
mod tensor;

pub use graph::{finite_difference_check, Bindings, Evaluation, Gradients, Graph, NodeId, OpCost};
pub(crate) use graph::argmax;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("shape mismatch at node {node}: {detail}")]
    ShapeMismatch { node: String, detail: String },
    #[error("invalid shape {shape:?}: {detail}")]
    InvalidShape { shape: Vec<usize>, detail: String },
    #[error("log of non-positive value {value} at node {node}")]
    LogDomain { node: String, value: f64 },
    #[error("leaf `{name}` is not bound")]
    Unbound { name: String },
    #[error("binding for `{name}` has shape {found:?}, expected {expected:?}")]
    BindingShape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("leaf `{0}` already declared with a different shape or kind")]
    DuplicateLeaf(String),
    #[error("output node {node} has shape {shape:?}, expected [1]")]
    NonScalarOutput { node: String, shape: Vec<usize> },
    #[error("graph has no output node")]
    NoOutput,
}
