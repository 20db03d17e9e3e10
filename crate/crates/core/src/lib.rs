//! Ensembles of deep clusterings with a controllable amount of agreement.
//!
//! A shared encoder feeds `K` softmax heads. Each head is trained on a
//! two-view mutual-information loss; a hinge on the cosine similarity
//! between heads keeps them apart, with its bound `d` adjusted by a feedback
//! controller that watches the measured NMI between heads. The ensemble is
//! then reduced to one labeling by co-association consensus.
//!
//! Start with the examples; `runner::run_experiment` is the one-call entry
//! point and the `divclust` binary wraps the same pipeline on disk.

pub mod autodiff;
pub mod consensus;
pub mod controller;
pub mod data;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod runner;
