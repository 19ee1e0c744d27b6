use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{ConfigError, FeatureKind, SignalValue, Topology};

/// Per-feature response coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDynamics {
    /// First-order gain toward the driven target, in (0, 1].
    #[serde(default = "one")]
    pub alpha: f64,
    /// Value the feature relaxes to when nothing drives it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient: Option<SignalValue>,
    /// Relaxation gain toward ambient for continuous features, in [0, 1].
    #[serde(default)]
    pub decay: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for FeatureDynamics {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            ambient: None,
            decay: 0.0,
        }
    }
}

/// While `actuator` holds `command`, it drives `feature` toward `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorEffect {
    pub actuator: String,
    pub command: SignalValue,
    pub feature: String,
    pub target: SignalValue,
}

/// Environmental event that drives a feature over `[from_tick, to_tick)`,
/// e.g. a fire heating a room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub from_tick: u64,
    pub to_tick: u64,
    pub feature: String,
    pub target: SignalValue,
}

impl Disturbance {
    pub fn active_at(&self, tick: u64) -> bool {
        self.from_tick <= tick && tick < self.to_tick
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    #[serde(default)]
    pub features: BTreeMap<String, FeatureDynamics>,
    #[serde(default)]
    pub effects: Vec<ActuatorEffect>,
    /// Gaussian noise standard deviation per float sensor.
    #[serde(default)]
    pub sensor_noise: BTreeMap<String, f64>,
}

impl PlantParams {
    pub fn dynamics(&self, feature: &str) -> FeatureDynamics {
        self.features.get(feature).cloned().unwrap_or_default()
    }

    pub fn validate(&self, t: &Topology) -> Vec<ConfigError> {
        let mut errors = Vec::new();
        for (id, d) in &self.features {
            let element = format!("plant.feature:{id}");
            let Some(f) = t.feature(id) else {
                errors.push(ConfigError::new(&element, "unknown-feature", "no such feature"));
                continue;
            };
            if !(d.alpha > 0.0 && d.alpha <= 1.0) {
                errors.push(ConfigError::new(&element, "alpha-range", format!("alpha {} not in (0, 1]", d.alpha)));
            }
            if !(0.0..=1.0).contains(&d.decay) {
                errors.push(ConfigError::new(&element, "decay-range", format!("decay {} not in [0, 1]", d.decay)));
            }
            if let Some(a) = &d.ambient {
                if !f.ty.admits(a) {
                    errors.push(ConfigError::new(&element, "ambient-type", format!("ambient {a} is not a {}", f.ty)));
                }
            }
        }
        for (i, e) in self.effects.iter().enumerate() {
            let element = format!("plant.effects[{i}]");
            match t.actuator(&e.actuator) {
                None => errors.push(ConfigError::new(&element, "unknown-actuator", format!("no actuator {:?}", e.actuator))),
                Some(a) => {
                    if !a.affects.contains(&e.feature) {
                        errors.push(ConfigError::new(
                            &element,
                            "undeclared-effect",
                            format!("actuator {} does not affect {:?}", a.id, e.feature),
                        ));
                    }
                    if !a.commands.admits(&e.command) {
                        errors.push(ConfigError::new(&element, "command-type", format!("{} is not a command of {}", e.command, a.id)));
                    }
                }
            }
            match t.feature(&e.feature) {
                None => errors.push(ConfigError::new(&element, "unknown-feature", format!("no feature {:?}", e.feature))),
                Some(f) if !f.ty.admits(&e.target) => {
                    errors.push(ConfigError::new(&element, "target-type", format!("target {} is not a {}", e.target, f.ty)))
                }
                Some(_) => {}
            }
        }
        for (id, sigma) in &self.sensor_noise {
            if t.sensor(id).is_none() {
                errors.push(ConfigError::new(format!("plant.sensor_noise:{id}"), "unknown-sensor", "no such sensor"));
            }
            if !(sigma.is_finite() && *sigma >= 0.0) {
                errors.push(ConfigError::new(format!("plant.sensor_noise:{id}"), "noise-range", "sigma must be >= 0"));
            }
        }
        errors
    }
}

pub fn validate_disturbances(ds: &[Disturbance], t: &Topology) -> Vec<ConfigError> {
    let mut errors = Vec::new();
    for (i, d) in ds.iter().enumerate() {
        let element = format!("disturbances[{i}]");
        match t.feature(&d.feature) {
            None => errors.push(ConfigError::new(&element, "unknown-feature", format!("no feature {:?}", d.feature))),
            Some(f) if !f.ty.admits(&d.target) => {
                errors.push(ConfigError::new(&element, "target-type", format!("target {} is not a {}", d.target, f.ty)))
            }
            Some(_) => {}
        }
        if d.to_tick <= d.from_tick {
            errors.push(ConfigError::new(&element, "empty-interval", "to_tick must exceed from_tick"));
        }
    }
    errors
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub tick: u64,
    pub feature_values: BTreeMap<String, SignalValue>,
}

impl PlantState {
    pub fn initial(t: &Topology) -> Self {
        Self {
            tick: 0,
            feature_values: t
                .features
                .iter()
                .map(|f| (f.id.clone(), f.ty.coerce(f.initial.clone())))
                .collect(),
        }
    }
}

/// `x + gain * (goal - x)`, kept on the segment between `x` and `goal` so
/// rounding never overshoots.
fn toward(x: f64, goal: f64, gain: f64) -> f64 {
    let y = x + gain * (goal - x);
    y.clamp(x.min(goal), x.max(goal))
}

/// Advances the plant by one tick.
///
/// Continuous features move `x + alpha * (target - x)` toward the mean of
/// their active targets, or relax toward ambient at `decay` when undriven.
/// Discrete features take their last active target immediately, or ambient
/// when undriven and an ambient is configured.
pub fn step_plant(
    state: &PlantState,
    commands: &BTreeMap<String, SignalValue>,
    params: &PlantParams,
    topology: &Topology,
    disturbances: &[Disturbance],
) -> PlantState {
    let mut targets: BTreeMap<&str, Vec<&SignalValue>> = BTreeMap::new();
    for e in &params.effects {
        if commands.get(&e.actuator).is_some_and(|c| c.loosely_equals(&e.command)) {
            targets.entry(e.feature.as_str()).or_default().push(&e.target);
        }
    }
    for d in disturbances.iter().filter(|d| d.active_at(state.tick)) {
        targets.entry(d.feature.as_str()).or_default().push(&d.target);
    }

    let mut next = state.feature_values.clone();
    for f in &topology.features {
        let Some(current) = state.feature_values.get(&f.id) else {
            continue;
        };
        let dyn_ = params.dynamics(&f.id);
        let driven = targets.get(f.id.as_str()).filter(|ts| !ts.is_empty());
        let value = match f.kind {
            FeatureKind::Continuous => {
                let x = current.as_f64().unwrap_or(0.0);
                let updated = match driven {
                    Some(ts) => {
                        let goal = ts.iter().filter_map(|v| v.as_f64()).sum::<f64>() / ts.len() as f64;
                        toward(x, goal, dyn_.alpha)
                    }
                    None => match dyn_.ambient.as_ref().and_then(SignalValue::as_f64) {
                        Some(amb) if dyn_.decay > 0.0 => toward(x, amb, dyn_.decay),
                        _ => x,
                    },
                };
                SignalValue::Float(updated)
            }
            FeatureKind::Discrete => match driven {
                Some(ts) => ts[ts.len() - 1].clone(),
                None => dyn_.ambient.clone().unwrap_or_else(|| current.clone()),
            },
        };
        next.insert(f.id.clone(), value);
    }
    PlantState {
        tick: state.tick + 1,
        feature_values: next,
    }
}
