use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge ({u}, {v}) has an endpoint outside 0..{n}")]
    EndpointOutOfRange { u: usize, v: usize, n: usize },

    #[error("{what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("node index {index} out of range for graph with {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("source set is empty")]
    EmptySources,

    #[error("density needs at least 2 nodes, graph has {0}")]
    TooFewNodes(usize),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite value entering {0}")]
    NonFinite(&'static str),

    #[error("variable belongs to a different tape")]
    ForeignVariable,

    #[error("loss must be a 1x1 tensor, got {0:?}")]
    NonScalarLoss((usize, usize)),

    #[error("backward already ran on this tape")]
    StaleTape,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mask set is empty: ratio {ratio} selects no node out of {n}")]
    EmptyMask { ratio: f64, n: usize },

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("training split has no labeled anomalies")]
    NoLabeledAnomalies,

    #[error("metric needs both classes, got {positives} positives and {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },

    #[error("labeled anomaly set is empty")]
    EmptyLabeledAnomalies,

    #[error("unlabeled anomaly set is empty; reachable ratio is undefined")]
    EmptyUnlabeledAnomalies,

    #[error("labeled and unlabeled anomaly sets overlap at node {0}")]
    OverlappingSets(usize),

    #[error("not enough labeled nodes: need {needed} {class}, have {available}")]
    InsufficientLabels {
        class: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("clique size {size} infeasible with {available} structural anomaly slots")]
    InfeasibleClique { size: usize, available: usize },

    #[error("class {0} is not present in the collection")]
    ClassAbsent(i64),

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("split stratum is empty: {0}")]
    EmptyStratum(String),

    #[error("hyperparameter grid is empty")]
    EmptyGrid,

    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
