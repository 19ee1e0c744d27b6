use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::time::{DEFAULT_MS_PER_TICK, MAX_MS_PER_TICK};
use super::value::{SignalValue, ValueType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    In,
    Out,
    Internal,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::Internal => "internal",
        })
    }
}

/// A PLC variable, optionally bound to a physical input terminal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VariableRef {
    pub plc: String,
    pub name: String,
    pub dir: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableDecl {
    pub name: String,
    pub dir: Direction,
    #[serde(rename = "type")]
    pub ty: ValueType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<SignalValue>,
}

impl VariableDecl {
    /// Declared initial value, or the type's zero (false, 0, 0.0, first member).
    pub fn initial_value(&self) -> SignalValue {
        if let Some(v) = &self.initial {
            return self.ty.coerce(v.clone());
        }
        default_value(&self.ty)
    }
}

pub fn default_value(ty: &ValueType) -> SignalValue {
    match ty {
        ValueType::Bool => SignalValue::Bool(false),
        ValueType::Int => SignalValue::Int(0),
        ValueType::Float => SignalValue::Float(0.0),
        ValueType::Enum(set) => SignalValue::Enum(set.first().cloned().unwrap_or_default()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlcSpec {
    pub id: String,
    /// Attachment point of the PLC cabinet; origin of its bus traffic.
    pub location: String,
    #[serde(default)]
    pub variables: Vec<VariableDecl>,
}

impl PlcSpec {
    pub fn variable(&self, name: &str) -> Option<&VariableDecl> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn var_ref(&self, name: &str) -> Option<VariableRef> {
        self.variable(name).map(|v| VariableRef {
            plc: self.id.clone(),
            name: v.name.clone(),
            dir: v.dir,
            line: v.line.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentFeature {
    pub id: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub unit: String,
    #[serde(rename = "type")]
    pub ty: ValueType,
    pub initial: SignalValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub id: String,
    pub measures: String,
    pub plc: String,
    pub variable: String,
    /// Inclusive `[lo, hi]`; absent means the sensor has no range policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_range: Option<[f64; 2]>,
    #[serde(default)]
    pub unit: String,
    /// Attachment point legitimate readings originate from.
    pub origin: String,
}

impl SensorSpec {
    pub fn in_range(&self, v: &SignalValue) -> Option<bool> {
        let [lo, hi] = self.normal_range?;
        let x = v.as_f64()?;
        Some(x >= lo && x <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorSpec {
    pub id: String,
    pub affects: Vec<String>,
    pub plc: String,
    pub variable: String,
    pub commands: ValueType,
}

/// Directed inter-PLC message channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub channel: String,
    pub from: String,
    pub to: String,
    pub payload: ValueType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    #[serde(default = "default_ms_per_tick")]
    pub ms_per_tick: u64,
    #[serde(default)]
    pub attachment_points: Vec<String>,
    #[serde(default)]
    pub plcs: Vec<PlcSpec>,
    #[serde(default)]
    pub features: Vec<EnvironmentFeature>,
    #[serde(default)]
    pub sensors: Vec<SensorSpec>,
    #[serde(default)]
    pub actuators: Vec<ActuatorSpec>,
    #[serde(default)]
    pub links: Vec<Link>,
}

fn default_ms_per_tick() -> u64 {
    DEFAULT_MS_PER_TICK
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            ms_per_tick: DEFAULT_MS_PER_TICK,
            attachment_points: Vec::new(),
            plcs: Vec::new(),
            features: Vec::new(),
            sensors: Vec::new(),
            actuators: Vec::new(),
            links: Vec::new(),
        }
    }
}

impl Topology {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn plc(&self, id: &str) -> Option<&PlcSpec> {
        self.plcs.iter().find(|p| p.id == id)
    }

    pub fn sensor(&self, id: &str) -> Option<&SensorSpec> {
        self.sensors.iter().find(|s| s.id == id)
    }

    pub fn actuator(&self, id: &str) -> Option<&ActuatorSpec> {
        self.actuators.iter().find(|a| a.id == id)
    }

    pub fn feature(&self, id: &str) -> Option<&EnvironmentFeature> {
        self.features.iter().find(|f| f.id == id)
    }

    pub fn link(&self, channel: &str) -> Option<&Link> {
        self.links.iter().find(|l| l.channel == channel)
    }

    pub fn has_attachment_point(&self, id: &str) -> bool {
        self.attachment_points.iter().any(|p| p == id)
    }

    pub fn sensor_for(&self, plc: &str, variable: &str) -> Option<&SensorSpec> {
        self.sensors
            .iter()
            .find(|s| s.plc == plc && s.variable == variable)
    }

    pub fn actuator_for(&self, plc: &str, variable: &str) -> Option<&ActuatorSpec> {
        self.actuators
            .iter()
            .find(|a| a.plc == plc && a.variable == variable)
    }

    pub fn sensor_var(&self, sensor: &SensorSpec) -> Option<VariableRef> {
        self.plc(&sensor.plc)?.var_ref(&sensor.variable)
    }

    pub fn sensor_type(&self, sensor: &SensorSpec) -> Option<&ValueType> {
        self.plc(&sensor.plc)?
            .variable(&sensor.variable)
            .map(|v| &v.ty)
    }

    pub fn actuator_var(&self, actuator: &ActuatorSpec) -> Option<VariableRef> {
        self.plc(&actuator.plc)?.var_ref(&actuator.variable)
    }

    /// Actuators that change the given feature, in declaration order.
    pub fn actuators_affecting<'a>(&'a self, feature: &'a str) -> impl Iterator<Item = &'a ActuatorSpec> {
        self.actuators
            .iter()
            .filter(move |a| a.affects.iter().any(|f| f == feature))
    }
}

/// One failed topology rule.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfigError {
    /// Offending element, e.g. `actuator:door_lock`.
    pub element: String,
    /// Short rule name, e.g. `unknown-feature`.
    pub rule: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(element: impl Into<String>, rule: &str, message: impl Into<String>) -> Self {
        Self {
            element: element.into(),
            rule: rule.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.element, self.rule, self.message)
    }
}

pub fn valid_identifier(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_graphic() && b != b'"' && b != b'\\')
}

fn check_ids<'a>(
    errors: &mut Vec<ConfigError>,
    kind: &str,
    ids: impl Iterator<Item = &'a str>,
) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !valid_identifier(id) {
            errors.push(ConfigError::new(
                format!("{kind}:{id}"),
                "bad-identifier",
                format!("{kind} id {id:?} must be a non-empty printable ASCII string"),
            ));
        }
        if !seen.insert(id) {
            errors.push(ConfigError::new(
                format!("{kind}:{id}"),
                "duplicate-id",
                format!("{kind} id {id:?} is declared more than once"),
            ));
        }
    }
    seen
}

fn repeated<'a>(ids: impl Iterator<Item = &'a str>) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::new();
    ids.filter(|id| !seen.insert(*id)).collect()
}

/// Checks every cross-reference and typing rule of a topology.
///
/// The result is sorted, so declaration order never affects it.
pub fn validate_topology(t: &Topology) -> Vec<ConfigError> {
    let mut errors = Vec::new();

    if t.ms_per_tick == 0 || t.ms_per_tick > MAX_MS_PER_TICK {
        errors.push(ConfigError::new(
            "topology",
            "scan-period",
            format!("ms_per_tick {} outside 1..={MAX_MS_PER_TICK}", t.ms_per_tick),
        ));
    }

    check_ids(&mut errors, "attachment_point", t.attachment_points.iter().map(String::as_str));
    check_ids(&mut errors, "plc", t.plcs.iter().map(|p| p.id.as_str()));
    check_ids(&mut errors, "feature", t.features.iter().map(|f| f.id.as_str()));
    // References to a duplicated id are ambiguous; only the duplicate itself is reported.
    let plc_dups = repeated(t.plcs.iter().map(|p| p.id.as_str()));
    let feature_dups = repeated(t.features.iter().map(|f| f.id.as_str()));
    let resolve_feature = |id: &str| t.feature(id).filter(|_| !feature_dups.contains(id));
    let resolve_var = |plc: &str, name: &str| -> Option<Option<&VariableDecl>> {
        if plc_dups.contains(plc) {
            return None;
        }
        let p = t.plc(plc)?;
        if p.variables.iter().filter(|v| v.name == name).count() > 1 {
            return None;
        }
        Some(p.variable(name))
    };
    check_ids(&mut errors, "sensor", t.sensors.iter().map(|s| s.id.as_str()));
    check_ids(&mut errors, "actuator", t.actuators.iter().map(|a| a.id.as_str()));
    check_ids(&mut errors, "channel", t.links.iter().map(|l| l.channel.as_str()));

    for plc in &t.plcs {
        let element = format!("plc:{}", plc.id);
        if !t.has_attachment_point(&plc.location) {
            errors.push(ConfigError::new(
                &element,
                "unknown-attachment-point",
                format!("location {:?} is not a declared attachment point", plc.location),
            ));
        }
        check_ids(
            &mut errors,
            &format!("variable:{}", plc.id),
            plc.variables.iter().map(|v| v.name.as_str()),
        );
        for var in &plc.variables {
            if let Some(init) = &var.initial {
                if !var.ty.admits(init) {
                    errors.push(ConfigError::new(
                        format!("variable:{}/{}", plc.id, var.name),
                        "initial-type",
                        format!("initial value {init} is not a {}", var.ty),
                    ));
                }
            }
        }
    }

    for f in &t.features {
        let element = format!("feature:{}", f.id);
        match (f.kind, &f.ty) {
            (FeatureKind::Continuous, ValueType::Float) => {}
            (FeatureKind::Discrete, ValueType::Bool | ValueType::Enum(_)) => {}
            (kind, ty) => errors.push(ConfigError::new(
                &element,
                "feature-kind",
                format!("{kind:?} feature cannot carry {ty} values"),
            )),
        }
        if !f.ty.admits(&f.initial) {
            errors.push(ConfigError::new(
                &element,
                "initial-type",
                format!("initial value {} is not a {}", f.initial, f.ty),
            ));
        }
    }

    let mut bound_inputs: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for s in &t.sensors {
        let element = format!("sensor:{}", s.id);
        let feature = resolve_feature(&s.measures);
        if feature.is_none() {
            errors.push(ConfigError::new(
                &element,
                "unknown-feature",
                format!("measures undeclared feature {:?}", s.measures),
            ));
        }
        if !t.has_attachment_point(&s.origin) {
            errors.push(ConfigError::new(
                &element,
                "unknown-attachment-point",
                format!("origin {:?} is not a declared attachment point", s.origin),
            ));
        }
        if t.plc(&s.plc).is_none() {
            errors.push(ConfigError::new(
                &element,
                "unknown-plc",
                format!("attaches to undeclared PLC {:?}", s.plc),
            ));
        }
        if let Some(found) = resolve_var(&s.plc, &s.variable) {
            match found {
                None => errors.push(ConfigError::new(
                    &element,
                    "unknown-variable",
                    format!("attaches to undeclared variable {}/{}", s.plc, s.variable),
                )),
                Some(var) => {
                    *bound_inputs.entry((&s.plc, &s.variable)).or_default() += 1;
                    if var.dir != Direction::In {
                        errors.push(ConfigError::new(
                            &element,
                            "sensor-direction",
                            format!("variable {}/{} must be an input", s.plc, s.variable),
                        ));
                    }
                    if var.line.is_none() {
                        errors.push(ConfigError::new(
                            &element,
                            "missing-input-line",
                            format!("input {}/{} has no input line", s.plc, s.variable),
                        ));
                    }
                    if let Some(f) = feature {
                        if f.ty != var.ty {
                            errors.push(ConfigError::new(
                                &element,
                                "sensor-type",
                                format!(
                                    "variable type {} does not match feature {} type {}",
                                    var.ty, f.id, f.ty
                                ),
                            ));
                        }
                    }
                    if s.normal_range.is_some() && !var.ty.is_numeric() {
                        errors.push(ConfigError::new(
                            &element,
                            "range-type",
                            "normal_range requires a numeric sensor",
                        ));
                    }
                }
            }
        }
        if let Some([lo, hi]) = s.normal_range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                errors.push(ConfigError::new(
                    &element,
                    "range-bounds",
                    format!("normal_range [{lo}, {hi}] must be finite with lo <= hi"),
                ));
            }
        }
    }
    for ((plc, var), n) in bound_inputs {
        if n > 1 {
            errors.push(ConfigError::new(
                format!("variable:{plc}/{var}"),
                "multiply-bound",
                format!("input is bound to {n} sensors"),
            ));
        }
    }

    let mut bound_outputs: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for a in &t.actuators {
        let element = format!("actuator:{}", a.id);
        if a.affects.is_empty() {
            errors.push(ConfigError::new(
                &element,
                "no-features",
                "actuator must affect at least one feature",
            ));
        }
        for f in &a.affects {
            if t.feature(f).is_none() {
                errors.push(ConfigError::new(
                    &element,
                    "unknown-feature",
                    format!("affects undeclared feature {f:?}"),
                ));
            }
        }
        if t.plc(&a.plc).is_none() {
            errors.push(ConfigError::new(
                &element,
                "unknown-plc",
                format!("attaches to undeclared PLC {:?}", a.plc),
            ));
        }
        if let Some(found) = resolve_var(&a.plc, &a.variable) {
            match found {
                None => errors.push(ConfigError::new(
                    &element,
                    "unknown-variable",
                    format!("attaches to undeclared variable {}/{}", a.plc, a.variable),
                )),
                Some(var) => {
                    *bound_outputs.entry((&a.plc, &a.variable)).or_default() += 1;
                    if var.dir != Direction::Out {
                        errors.push(ConfigError::new(
                            &element,
                            "actuator-direction",
                            format!("variable {}/{} must be an output", a.plc, a.variable),
                        ));
                    }
                    if var.ty != a.commands {
                        errors.push(ConfigError::new(
                            &element,
                            "command-type",
                            format!("command set {} differs from variable type {}", a.commands, var.ty),
                        ));
                    }
                }
            }
        }
    }
    for ((plc, var), n) in bound_outputs {
        if n > 1 {
            errors.push(ConfigError::new(
                format!("variable:{plc}/{var}"),
                "multiply-bound",
                format!("output is bound to {n} actuators"),
            ));
        }
    }

    for l in &t.links {
        let element = format!("channel:{}", l.channel);
        for (end, id) in [("from", &l.from), ("to", &l.to)] {
            if t.plc(id).is_none() {
                errors.push(ConfigError::new(
                    &element,
                    "unknown-plc",
                    format!("{end} endpoint {id:?} is not a declared PLC"),
                ));
            }
        }
        if l.from == l.to {
            errors.push(ConfigError::new(
                &element,
                "self-link",
                "link endpoints must be different PLCs",
            ));
        }
    }

    errors.sort();
    errors
}
