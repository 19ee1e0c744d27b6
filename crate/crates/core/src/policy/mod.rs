//! Declarative policies over the provenance graph.
//!
//! A policy document is JSON:
//!
//! ```json
//! {"schema": "plcprov-policy/1", "policies": [
//!   {"id": "dup_thermostat", "severity": "warning", "kind": "duplicate_actuation",
//!    "actuator": "thermostat", "within_ticks": 1}
//! ]}
//! ```

mod check;
mod predicate;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use check::{
    check_correlation, check_duplicate_actuation, check_feature_contention, check_guard, check_range_excursions,
    check_source_binding, classify_conflict, evaluate, PolicyMatch, Witness,
};
pub use predicate::{Permit, Predicate};

use crate::model::{Topology, ValueType};

pub const POLICY_SCHEMA: &str = "plcprov-policy/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Critical,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Critical => "critical",
        })
    }
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyKind {
    DuplicateActuation {
        actuator: String,
        within_ticks: u64,
    },
    ConflictingCommands {
        actuator: String,
        within_ticks: u64,
    },
    RangeExcursion {
        sensor: String,
        min_duration_ticks: u64,
    },
    FeatureContention {
        feature: String,
        #[serde(default = "two")]
        max_concurrent: usize,
    },
    Guard {
        actuator: String,
        command_value: crate::model::SignalValue,
        permit: Permit,
    },
    Correlation {
        trigger_sensor: String,
        trigger_predicate: Predicate,
        corroborating_sensor: String,
        corroborating_predicate: Predicate,
        window_ticks: u64,
    },
    SourceBinding {
        sensor: String,
        expected_origin_point: String,
    },
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::DuplicateActuation { .. } => "duplicate_actuation",
            PolicyKind::ConflictingCommands { .. } => "conflicting_commands",
            PolicyKind::RangeExcursion { .. } => "range_excursion",
            PolicyKind::FeatureContention { .. } => "feature_contention",
            PolicyKind::Guard { .. } => "guard",
            PolicyKind::Correlation { .. } => "correlation",
            PolicyKind::SourceBinding { .. } => "source_binding",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub id: String,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(flatten)]
    pub kind: PolicyKind,
}

/// Parse or cross-reference failure, located by a JSON path like
/// `policies[2].permit.any_of[0].sensor`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Error, Serialize, Deserialize)]
#[error("{location}: {message}")]
pub struct PolicyError {
    pub location: String,
    pub message: String,
}

impl PolicyError {
    pub fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            location: location.into(),
            message: message.into(),
        }
    }
}

/// Parses a policy document without looking at any topology.
///
/// An empty (or all-whitespace) document has no policies.
pub fn parse_policy_document(text: &str) -> Result<Vec<Policy>, PolicyError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| PolicyError::new("document", e.to_string()))?;
    let serde_json::Value::Object(mut doc) = doc else {
        return Err(PolicyError::new("document", "expected a JSON object"));
    };
    if let Some(schema) = doc.remove("schema") {
        if schema.as_str() != Some(POLICY_SCHEMA) {
            return Err(PolicyError::new("schema", format!("unsupported schema {schema} (expected {POLICY_SCHEMA:?})")));
        }
    }
    let list = match doc.remove("policies") {
        None => Vec::new(),
        Some(serde_json::Value::Array(a)) => a,
        Some(_) => return Err(PolicyError::new("policies", "expected an array")),
    };
    if let Some(key) = doc.keys().next() {
        return Err(PolicyError::new(key.clone(), "unknown field"));
    }
    let mut out = Vec::with_capacity(list.len());
    for (i, v) in list.into_iter().enumerate() {
        let loc = format!("policies[{i}]");
        let serde_json::Value::Object(mut obj) = v else {
            return Err(PolicyError::new(loc, "expected an object"));
        };
        let id = match obj.remove("id") {
            Some(serde_json::Value::String(s)) => s,
            _ => return Err(PolicyError::new(format!("{loc}.id"), "missing or non-string id")),
        };
        let loc = format!("policies[{i}] ({id})");
        let severity = match obj.remove("severity") {
            None => Severity::Warning,
            Some(v) => serde_json::from_value(v).map_err(|e| PolicyError::new(format!("{loc}.severity"), e.to_string()))?,
        };
        let description = match obj.remove("description") {
            None => None,
            Some(serde_json::Value::String(s)) => Some(s),
            Some(_) => return Err(PolicyError::new(format!("{loc}.description"), "expected a string")),
        };
        let kind: PolicyKind =
            serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| PolicyError::new(&loc, e.to_string()))?;
        out.push(Policy {
            id,
            severity,
            description,
            kind,
        });
    }
    Ok(out)
}

/// Serializes policies back into a document `parse_policy_document` accepts.
pub fn policy_document(policies: &[Policy]) -> String {
    let doc = serde_json::json!({"schema": POLICY_SCHEMA, "policies": policies});
    let mut s = serde_json::to_string_pretty(&doc).expect("policies serialize");
    s.push('\n');
    s
}

fn check_window(errors: &mut Vec<PolicyError>, loc: &str, field: &str, w: u64) {
    if w < 1 {
        errors.push(PolicyError::new(format!("{loc}.{field}"), "window must be at least 1 tick"));
    }
}

fn sensor_type<'a>(errors: &mut Vec<PolicyError>, t: &'a Topology, loc: &str, sensor: &str) -> Option<&'a ValueType> {
    match t.sensor(sensor) {
        None => {
            errors.push(PolicyError::new(loc, format!("unknown sensor {sensor:?}")));
            None
        }
        Some(s) => t.sensor_type(s),
    }
}

/// Cross-checks one policy against the topology: references resolve,
/// windows are positive and predicates fit the sensor value types.
pub fn validate_policy(p: &Policy, index: usize, t: &Topology) -> Vec<PolicyError> {
    let loc = format!("policies[{index}] ({})", p.id);
    let mut errors = Vec::new();
    if !crate::model::valid_identifier(&p.id) {
        errors.push(PolicyError::new(format!("{loc}.id"), "policy id must be a non-empty identifier"));
    }
    match &p.kind {
        PolicyKind::DuplicateActuation { actuator, within_ticks } | PolicyKind::ConflictingCommands { actuator, within_ticks } => {
            if t.actuator(actuator).is_none() {
                errors.push(PolicyError::new(format!("{loc}.actuator"), format!("unknown actuator {actuator:?}")));
            }
            check_window(&mut errors, &loc, "within_ticks", *within_ticks);
        }
        PolicyKind::RangeExcursion { sensor, min_duration_ticks } => {
            match t.sensor(sensor) {
                None => errors.push(PolicyError::new(format!("{loc}.sensor"), format!("unknown sensor {sensor:?}"))),
                Some(s) if s.normal_range.is_none() => {
                    errors.push(PolicyError::new(format!("{loc}.sensor"), format!("sensor {sensor:?} has no normal_range")))
                }
                Some(_) => {}
            }
            check_window(&mut errors, &loc, "min_duration_ticks", *min_duration_ticks);
        }
        PolicyKind::FeatureContention { feature, max_concurrent } => {
            if t.feature(feature).is_none() {
                errors.push(PolicyError::new(format!("{loc}.feature"), format!("unknown feature {feature:?}")));
            }
            if *max_concurrent < 1 {
                errors.push(PolicyError::new(format!("{loc}.max_concurrent"), "must be at least 1"));
            }
        }
        PolicyKind::Guard {
            actuator,
            command_value,
            permit,
        } => {
            match t.actuator(actuator) {
                None => errors.push(PolicyError::new(format!("{loc}.actuator"), format!("unknown actuator {actuator:?}"))),
                Some(a) if !a.commands.admits(command_value) => errors.push(PolicyError::new(
                    format!("{loc}.command_value"),
                    format!("{command_value} is not a command of {actuator} ({})", a.commands),
                )),
                Some(_) => {}
            }
            permit.validate(t, &format!("{loc}.permit"), &mut errors);
        }
        PolicyKind::Correlation {
            trigger_sensor,
            trigger_predicate,
            corroborating_sensor,
            corroborating_predicate,
            window_ticks,
        } => {
            if let Some(ty) = sensor_type(&mut errors, t, &format!("{loc}.trigger_sensor"), trigger_sensor) {
                trigger_predicate.validate(ty, true, &format!("{loc}.trigger_predicate"), &mut errors);
            }
            if let Some(ty) = sensor_type(&mut errors, t, &format!("{loc}.corroborating_sensor"), corroborating_sensor) {
                corroborating_predicate.validate(ty, true, &format!("{loc}.corroborating_predicate"), &mut errors);
            }
            check_window(&mut errors, &loc, "window_ticks", *window_ticks);
        }
        PolicyKind::SourceBinding {
            sensor,
            expected_origin_point,
        } => {
            if t.sensor(sensor).is_none() {
                errors.push(PolicyError::new(format!("{loc}.sensor"), format!("unknown sensor {sensor:?}")));
            }
            if !t.has_attachment_point(expected_origin_point) {
                errors.push(PolicyError::new(
                    format!("{loc}.expected_origin_point"),
                    format!("undeclared attachment point {expected_origin_point:?}"),
                ));
            }
        }
    }
    errors
}

/// Strict parse followed by a topology cross-check of every policy.
/// Policy ids must be unique.
pub fn parse_policies(text: &str, t: &Topology) -> Result<Vec<Policy>, Vec<PolicyError>> {
    let policies = parse_policy_document(text).map_err(|e| vec![e])?;
    let mut errors: Vec<PolicyError> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, p) in policies.iter().enumerate() {
        if !seen.insert(p.id.as_str()) {
            errors.push(PolicyError::new(format!("policies[{i}] ({})", p.id), "duplicate policy id"));
        }
        errors.extend(validate_policy(p, i, t));
    }
    if errors.is_empty() {
        Ok(policies)
    } else {
        Err(errors)
    }
}
