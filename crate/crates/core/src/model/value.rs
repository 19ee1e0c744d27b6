use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A sensor measurement, actuator command, internal variable value or
/// message payload.
///
/// On the wire a value is a bare JSON scalar: booleans for `Bool`, integers
/// for `Int`, numbers with a fractional part or exponent for `Float`, and
/// strings for `Enum`. Floats are always written with a decimal point so the
/// variant survives a round trip.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Enum(String),
}

impl SignalValue {
    /// Builds a float value, rejecting NaN and infinities.
    pub fn float(v: f64) -> Option<Self> {
        v.is_finite().then_some(SignalValue::Float(v))
    }

    pub fn enumerated(name: impl Into<String>) -> Self {
        SignalValue::Enum(name.into())
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            SignalValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Numeric view used by comparisons and range checks. Ints widen to f64.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            SignalValue::Int(i) => Some(*i as f64),
            SignalValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_enum(&self) -> Option<&str> {
        match self {
            SignalValue::Enum(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, SignalValue::Int(_) | SignalValue::Float(_))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            SignalValue::Bool(_) => "bool",
            SignalValue::Int(_) => "int",
            SignalValue::Float(_) => "float",
            SignalValue::Enum(_) => "enum",
        }
    }

    /// Equality with numeric widening, so `Int(3)` equals `Float(3.0)`.
    pub fn loosely_equals(&self, other: &SignalValue) -> bool {
        match (self.as_f64(), other.as_f64()) {
            (Some(a), Some(b)) => a == b,
            _ => self == other,
        }
    }

    /// Ordering for numeric values only.
    pub fn numeric_cmp(&self, other: &SignalValue) -> Option<Ordering> {
        self.as_f64()?.partial_cmp(&other.as_f64()?)
    }

    /// Total order used to sort value sets deterministically.
    pub fn canonical_cmp(&self, other: &SignalValue) -> Ordering {
        fn rank(v: &SignalValue) -> u8 {
            match v {
                SignalValue::Bool(_) => 0,
                SignalValue::Int(_) => 1,
                SignalValue::Float(_) => 2,
                SignalValue::Enum(_) => 3,
            }
        }
        match (self, other) {
            (SignalValue::Bool(a), SignalValue::Bool(b)) => a.cmp(b),
            (SignalValue::Int(a), SignalValue::Int(b)) => a.cmp(b),
            (SignalValue::Float(a), SignalValue::Float(b)) => a.total_cmp(b),
            (SignalValue::Enum(a), SignalValue::Enum(b)) => a.cmp(b),
            _ => rank(self).cmp(&rank(other)),
        }
    }
}

impl fmt::Display for SignalValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalValue::Bool(b) => write!(f, "{b}"),
            SignalValue::Int(i) => write!(f, "{i}"),
            SignalValue::Float(x) => write!(f, "{x:?}"),
            SignalValue::Enum(s) => f.write_str(s),
        }
    }
}

impl From<bool> for SignalValue {
    fn from(b: bool) -> Self {
        SignalValue::Bool(b)
    }
}

impl From<i64> for SignalValue {
    fn from(i: i64) -> Self {
        SignalValue::Int(i)
    }
}

impl From<&str> for SignalValue {
    fn from(s: &str) -> Self {
        SignalValue::Enum(s.to_string())
    }
}

impl Serialize for SignalValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SignalValue::Bool(b) => serializer.serialize_bool(*b),
            SignalValue::Int(i) => serializer.serialize_i64(*i),
            SignalValue::Float(x) => serializer.serialize_f64(*x),
            SignalValue::Enum(s) => serializer.serialize_str(s),
        }
    }
}

struct SignalValueVisitor;

impl<'de> Visitor<'de> for SignalValueVisitor {
    type Value = SignalValue;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a boolean, integer, finite float or enum name")
    }

    fn visit_bool<E: de::Error>(self, v: bool) -> Result<SignalValue, E> {
        Ok(SignalValue::Bool(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<SignalValue, E> {
        Ok(SignalValue::Int(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<SignalValue, E> {
        i64::try_from(v)
            .map(SignalValue::Int)
            .map_err(|_| E::custom(format!("integer {v} exceeds signed 64-bit range")))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<SignalValue, E> {
        SignalValue::float(v).ok_or_else(|| E::custom("float values must be finite"))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<SignalValue, E> {
        Ok(SignalValue::Enum(v.to_string()))
    }

    fn visit_string<E: de::Error>(self, v: String) -> Result<SignalValue, E> {
        Ok(SignalValue::Enum(v))
    }
}

impl<'de> Deserialize<'de> for SignalValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(SignalValueVisitor)
    }
}

/// Declared value domain of a variable, channel or actuator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Bool,
    Int,
    Float,
    Enum(Vec<String>),
}

impl ValueType {
    pub fn admits(&self, v: &SignalValue) -> bool {
        match (self, v) {
            (ValueType::Bool, SignalValue::Bool(_)) => true,
            (ValueType::Int, SignalValue::Int(_)) => true,
            (ValueType::Float, SignalValue::Float(x)) => x.is_finite(),
            // integer literals are accepted where a float is declared
            (ValueType::Float, SignalValue::Int(_)) => true,
            (ValueType::Enum(set), SignalValue::Enum(s)) => set.iter().any(|m| m == s),
            _ => false,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, ValueType::Int | ValueType::Float)
    }

    /// Normalizes a value into this type (ints widen into float slots).
    pub fn coerce(&self, v: SignalValue) -> SignalValue {
        match (self, v) {
            (ValueType::Float, SignalValue::Int(i)) => SignalValue::Float(i as f64),
            (_, v) => v,
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Bool => f.write_str("bool"),
            ValueType::Int => f.write_str("int"),
            ValueType::Float => f.write_str("float"),
            ValueType::Enum(set) => write!(f, "enum{{{}}}", set.join(",")),
        }
    }
}
