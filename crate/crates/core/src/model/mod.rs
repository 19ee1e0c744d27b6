//! Shared domain vocabulary: values, time, devices and topology.

mod time;
mod topology;
mod value;

use thiserror::Error;

pub use time::{timestamp_ms, Timestamp, DEFAULT_MS_PER_TICK, MAX_MS_PER_TICK, MAX_TICK};
pub use topology::{
    default_value, valid_identifier, validate_topology, ActuatorSpec, ConfigError, Direction, EnvironmentFeature,
    FeatureKind, Link, PlcSpec, SensorSpec, Topology, VariableDecl, VariableRef,
};
pub use value::{SignalValue, ValueType};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("timestamp out of bounds: tick {tick} x {ms_per_tick} ms")]
    TimeBounds { tick: u64, ms_per_tick: u64 },
}
