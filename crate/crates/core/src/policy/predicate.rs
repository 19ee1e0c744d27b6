use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::model::{SignalValue, Topology, ValueType};

/// Test on one sensor reading. `becomes` and `rise` look at the sensor's
/// earlier readings and are only meaningful in correlation policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    Eq(SignalValue),
    Ne(SignalValue),
    Gt(SignalValue),
    Ge(SignalValue),
    Lt(SignalValue),
    Le(SignalValue),
    In(Vec<SignalValue>),
    /// Value equals the operand and the reading one tick earlier did not.
    Becomes(SignalValue),
    /// `value(t) - value(t - over_ticks) >= threshold`.
    Rise { threshold: f64, over_ticks: u64 },
}

impl Predicate {
    pub fn is_temporal(&self) -> bool {
        matches!(self, Predicate::Becomes(_) | Predicate::Rise { .. })
    }

    /// Static test on a single value. Temporal predicates fall back to
    /// their instantaneous part (`becomes v` tests `eq v`, `rise` is false).
    pub fn holds(&self, v: &SignalValue) -> bool {
        use std::cmp::Ordering::*;
        match self {
            Predicate::Eq(x) | Predicate::Becomes(x) => v.loosely_equals(x),
            Predicate::Ne(x) => !v.loosely_equals(x),
            Predicate::Gt(x) => v.numeric_cmp(x) == Some(Greater),
            Predicate::Ge(x) => matches!(v.numeric_cmp(x), Some(Greater | Equal)),
            Predicate::Lt(x) => v.numeric_cmp(x) == Some(Less),
            Predicate::Le(x) => matches!(v.numeric_cmp(x), Some(Less | Equal)),
            Predicate::In(xs) => xs.iter().any(|x| v.loosely_equals(x)),
            Predicate::Rise { .. } => false,
        }
    }

    pub(crate) fn validate(&self, ty: &ValueType, allow_temporal: bool, loc: &str, errors: &mut Vec<PolicyError>) {
        if self.is_temporal() && !allow_temporal {
            errors.push(PolicyError::new(loc, "becomes/rise are only allowed in correlation policies"));
        }
        let check = |errors: &mut Vec<PolicyError>, x: &SignalValue| {
            if !ty.admits(x) {
                errors.push(PolicyError::new(loc, format!("operand {x} does not fit sensor type {ty}")));
            }
        };
        match self {
            Predicate::Eq(x) | Predicate::Ne(x) | Predicate::Becomes(x) => check(errors, x),
            Predicate::Gt(x) | Predicate::Ge(x) | Predicate::Lt(x) | Predicate::Le(x) => {
                if !ty.is_numeric() || !x.is_numeric() {
                    errors.push(PolicyError::new(loc, format!("ordering needs a numeric sensor and operand, got {ty} vs {x}")));
                }
            }
            Predicate::In(xs) => {
                if xs.is_empty() {
                    errors.push(PolicyError::new(loc, "empty value set"));
                }
                for x in xs {
                    check(errors, x);
                }
            }
            Predicate::Rise { threshold, over_ticks } => {
                if !ty.is_numeric() {
                    errors.push(PolicyError::new(loc, format!("rise needs a numeric sensor, got {ty}")));
                }
                if !threshold.is_finite() {
                    errors.push(PolicyError::new(loc, "rise threshold must be finite"));
                }
                if *over_ticks < 1 {
                    errors.push(PolicyError::new(loc, "rise over_ticks must be at least 1"));
                }
            }
        }
    }
}

/// Condition over a command's lineage that authorizes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Permit {
    AnyOf(Vec<Permit>),
    AllOf(Vec<Permit>),
    Not(Box<Permit>),
    /// Some reading of `sensor` in the lineage satisfies `pred`, and was
    /// attributed to `origin` when one is given.
    AncestorReading {
        sensor: String,
        pred: Predicate,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        origin: Option<String>,
    },
    /// Some entity in the lineage is attributed to one of these operators
    /// (any operator when empty).
    Operator {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        ids: Vec<String>,
    },
}

impl Permit {
    pub(crate) fn validate(&self, t: &Topology, loc: &str, errors: &mut Vec<PolicyError>) {
        match self {
            Permit::AnyOf(ps) | Permit::AllOf(ps) => {
                let key = if matches!(self, Permit::AnyOf(_)) { "any_of" } else { "all_of" };
                if ps.is_empty() {
                    errors.push(PolicyError::new(format!("{loc}.{key}"), "empty condition list"));
                }
                for (i, p) in ps.iter().enumerate() {
                    p.validate(t, &format!("{loc}.{key}[{i}]"), errors);
                }
            }
            Permit::Not(p) => p.validate(t, &format!("{loc}.not"), errors),
            Permit::AncestorReading { sensor, pred, origin } => {
                let here = format!("{loc}.ancestor_reading");
                match t.sensor(sensor) {
                    None => errors.push(PolicyError::new(format!("{here}.sensor"), format!("unknown sensor {sensor:?}"))),
                    Some(s) => {
                        if let Some(ty) = t.sensor_type(s) {
                            pred.validate(ty, false, &format!("{here}.pred"), errors);
                        }
                    }
                }
                if let Some(o) = origin {
                    if !t.has_attachment_point(o) {
                        errors.push(PolicyError::new(format!("{here}.origin"), format!("undeclared attachment point {o:?}")));
                    }
                }
            }
            Permit::Operator { .. } => {}
        }
    }

    /// Sensors the condition refers to.
    pub fn sensors(&self) -> Vec<&str> {
        match self {
            Permit::AnyOf(ps) | Permit::AllOf(ps) => ps.iter().flat_map(Permit::sensors).collect(),
            Permit::Not(p) => p.sensors(),
            Permit::AncestorReading { sensor, .. } => vec![sensor],
            Permit::Operator { .. } => Vec::new(),
        }
    }
}
