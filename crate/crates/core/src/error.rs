use thiserror::Error;

use crate::network::{ArcId, NodeId};

/// Errors raised while building or checking the evacuation network model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("node ids must be dense: expected id {expected}, found {found}")]
    NonDenseNode { expected: usize, found: usize },
    #[error("arc ids must be dense: expected id {expected}, found {found}")]
    NonDenseArc { expected: usize, found: usize },
    #[error("arc {arc:?} references unknown node {node:?}")]
    UnknownNode { arc: ArcId, node: NodeId },
    #[error("arc {0:?} is a self loop")]
    SelfLoop(ArcId),
    #[error("arc {0:?} has zero travel time")]
    ZeroTravel(ArcId),
    #[error("evacuation node {node:?} has incoming arc {arc:?}")]
    EvacuationInflow { node: NodeId, arc: ArcId },
    #[error("safe node {node:?} has outgoing arc {arc:?}")]
    SafeOutflow { node: NodeId, arc: ArcId },
    #[error("contraflow pair ({0:?}, {1:?}) is not a pair of opposite arcs")]
    NotReversePair(ArcId, ArcId),
    #[error("arc {0:?} appears in more than one contraflow pair")]
    DuplicatePairArc(ArcId),
    #[error("evacuation nodes without a path to safety: {0:?}")]
    Disconnected(Vec<NodeId>),
    #[error("graph has no evacuation node")]
    NoZones,
    #[error("graph has no safe node")]
    NoSafeNodes,
    #[error("horizon must be at least one time step")]
    EmptyHorizon,
    #[error("zones without usable outgoing arc copies: {0:?}")]
    InfeasibleZones(Vec<NodeId>),
    #[error("super sink already present")]
    SuperSinkExists,
    #[error("path for zone {zone:?} is invalid: {reason}")]
    InvalidPath { zone: NodeId, reason: String },
    #[error("start time {start} is not a usable departure step of the path (usable: {usable:?})")]
    UnusableStart { start: u32, usable: Option<(u32, u32)> },
    #[error("plan sends a cohort over blocked arc {arc:?} at step {time}")]
    BlockedCohort { arc: ArcId, time: u32 },
    #[error("response curve rate must be positive")]
    ZeroRate,
}

/// Errors raised by the optimization backend.
#[derive(Debug, Error)]
pub enum MpError {
    #[error("model contains integer variables; use solve_mip")]
    NotContinuous,
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors raised by the solution methods.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Backend(#[from] MpError),
    #[error("{what} returned status {status}")]
    Status { what: String, status: String },
    #[error("missing dual values for {0}")]
    MissingDuals(String),
    #[error("zones without any feasible plan: {0:?}")]
    InfeasibleZones(Vec<NodeId>),
    #[error("instance cannot be fully evacuated within {horizon} steps (best {best_pct:.2}%)")]
    NotEvacuable { horizon: u32, best_pct: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}
