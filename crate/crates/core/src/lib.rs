//! Multi-PLC control-system simulation with provenance capture.
//!
//! The pipeline is `scenario -> plant::run_simulation -> trace::TraceLog ->
//! provenance::build_graph -> detect::detect -> detect::Report`. Each stage
//! is deterministic: identical inputs produce byte-identical outputs.

pub mod detect;
pub mod hashing;
pub mod logic;
pub mod model;
pub mod plant;
pub mod policy;
pub mod provenance;
pub mod scenario;
pub mod trace;
