use thiserror::Error;

use crate::model::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network model: {0}")]
    InvalidModel(ValidationReport),
    #[error("malformed network spec: {0}")]
    MalformedSpec(String),
    #[error("operation requires an open network")]
    NotOpen,
    #[error("operation requires a closed network")]
    NotClosed,
    #[error("traffic equations are singular: {0}")]
    SingularSystem(String),
    #[error("routing chain is not irreducible")]
    NotIrreducible,
    #[error("truncation cap must be at least 1 for every node")]
    CapacityTooSmall,
    #[error("state space of {states} states exceeds the guard limit of {limit}")]
    StateSpaceTooLarge { states: u128, limit: u128 },
    #[error("generator is singular or reducible: {0}")]
    SingularOrReducible(String),
    #[error("state {0} has zero stationary probability")]
    ZeroProbabilityState(usize),
    #[error("node {} is unstable (load {load})", .node + 1)]
    UnstableNode { node: usize, load: f64 },
    #[error("loads of nodes {} and {} coincide; use the degenerate method", .first + 1, .second + 1)]
    DegenerateLoads { first: usize, second: usize },
    #[error("loads are pairwise distinct; the degenerate method needs a repeated load")]
    DistinctLoads,
    #[error("load vector must be non-empty with positive finite entries")]
    InvalidLoads,
    #[error("service rates of node {} are state-dependent", .0 + 1)]
    NonConstantRates(usize),
    #[error("open model is unstable at node {} (load {load}); pass an override to simulate anyway", .node + 1)]
    UnstableOpenModel { node: usize, load: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("insufficient samples: needed {needed}, observed {observed}")]
    InsufficientSamples { needed: usize, observed: usize },
    #[error("not applicable: {0}")]
    NotApplicable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
