use thiserror::Error;

use crate::net::Endpoint;

/// Errors raised by the network model.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("endpoint {0} is not valid for a clique of {1} nodes")]
    InvalidEndpoint(Endpoint, usize),
    #[error("node {0} is out of range for a clique of {1} nodes")]
    InvalidNode(usize, usize),
    #[error("self edge on node {0}")]
    SelfEdge(usize),
    #[error("endpoint {0} is already assigned")]
    AlreadyAssigned(Endpoint),
    #[error("endpoints {0} and {1} belong to the same node")]
    SameNode(Endpoint, Endpoint),
    #[error("nodes {0} and {1} are already connected by another port pair")]
    DuplicatePair(usize, usize),
    #[error("node set is not a component of the communication graph")]
    NotAComponent,
    #[error("identity {id} is outside the universe [1, {universe}]")]
    IdOutOfUniverse { id: u64, universe: u64 },
    #[error("identity {0} appears more than once")]
    DuplicateId(u64),
    #[error("port table is not a valid clique wiring: {0}")]
    InvalidMapping(String),
}

/// Invalid protocol or run configuration, detected before a run starts.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Protocol(String),
    #[error("wake set is empty")]
    EmptyWakeSet,
    #[error("wake set names node {0} but there are only {1} nodes")]
    WakeNodeOutOfRange(usize, usize),
    #[error("max_rounds must be at least 1")]
    ZeroMaxRounds,
    #[error("mapping has {mapping} nodes but the identity assignment has {ids}")]
    SizeMismatch { mapping: usize, ids: usize },
    #[error("network must have at least one node")]
    Empty,
}

/// Errors that abort a simulation run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("scheduler fault: {0}")]
    Scheduler(String),
}
