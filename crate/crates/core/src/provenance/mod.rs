//! Provenance DAG over a trace, following the PROV-DM core: entities
//! (readings, variable states, commands, messages), activities (scans,
//! actuations) and agents (PLCs, sensors, operators, attachment points).

mod build;
mod export;
mod graph;
mod macro_level;

use thiserror::Error;

pub use build::{build_graph, ENGINEERING_WORKSTATION};
pub use export::{from_provjson, to_dot, to_provjson, PROVJSON_SCHEMA};
pub use graph::{
    ActivityKind, AgentKind, EntityKind, GraphMeta, Level, NodeAttrs, NodeId, NodeKind, ProvEdge, ProvGraph, ProvNode,
    Relation,
};
pub use macro_level::contract;

#[derive(Debug, Error)]
pub enum ProvError {
    #[error("no node or device {0:?} in the graph")]
    NotFound(String),
    #[error("node {0:?} is not a command")]
    NotACommand(String),
    #[error("empty window [{t0}, {t1})")]
    EmptyWindow { t0: u64, t1: u64 },
    #[error("node id collision on {0:?}")]
    IdCollision(String),
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: out-of-order record: {message}")]
    OutOfOrder { line: usize, message: String },
    #[error("invalid graph document: {0}")]
    Document(String),
}
