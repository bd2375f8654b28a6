use thiserror::Error;

use crate::grid::{BranchId, NodeId};

#[derive(Debug, Error)]
pub enum Error {
    #[error("branch {0} has a singular series impedance")]
    SingularImpedance(BranchId),

    #[error("unknown branch {0}")]
    UnknownBranch(BranchId),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("split position {0} is outside (0, 1)")]
    InvalidPosition(f64),

    #[error("branch {0} is not eligible for a fault hypothesis")]
    IneligibleBranch(BranchId),

    #[error("branch {0} does not connect two monitored nodes")]
    NotSingleLineUfc(BranchId),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid file{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    GridFile {
        line: Option<usize>,
        message: String,
    },

    #[error("observability conditions violated at nodes {nodes:?}")]
    ObservabilityViolated { nodes: Vec<NodeId> },

    #[error("measurement model of {grid} is rank deficient (unobservable)")]
    Unobservable { grid: String },

    #[error("placement problem: {0}")]
    Placement(String),

    #[error("placement problem is infeasible")]
    Infeasible,

    #[error("steady-state circuit is singular (isolated subnetwork?)")]
    SingularCircuit,

    #[error("invalid fault scenario: {0}")]
    InvalidScenario(String),

    #[error("measurement stream: {0}")]
    Stream(String),

    #[error("monitored sets differ: {0}")]
    MonitoringMismatch(String),

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("FDLA: {0}")]
    Fdla(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
