//! Graph anomaly detection with GCN/GIN encoders trained either end to end
//! or through self-supervised pre-training (contrastive DGI, masked
//! GraphMAE) followed by a frozen-encoder classifier.
//!
//! Besides the learning pipelines the crate carries the label-propagation
//! diagnostics used to reason about when pre-training helps: k-hop reachable
//! ratios, per-hop ranking of unlabeled anomalies and density classes.

pub mod autodiff;
pub mod data;
pub mod detector;
pub mod diagnostics;
pub mod encoders;
mod error;
pub mod experiment;
pub mod graph;
pub mod graphlevel;
pub mod io_util;
pub mod matrix;
pub mod metrics;
pub mod pretrain;
pub mod rng;

pub use error::{Error, Result};
pub use graph::{Graph, GraphStats, Label, SparseMatrix};
pub use matrix::Matrix;
