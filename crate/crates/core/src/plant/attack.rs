use serde::{Deserialize, Serialize};

use super::bus::{BusEvent, BusEventKind};
use crate::model::{ConfigError, Topology};
use crate::model::SignalValue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackAction {
    /// Replace a sensor's reading with a forged value sent from `origin`.
    ForgeSensor {
        sensor: String,
        value: SignalValue,
        origin: String,
    },
    /// Put a message on an inter-PLC channel from `origin`.
    InjectMessage {
        channel: String,
        payload: SignalValue,
        origin: String,
    },
    /// Re-emit the readings recorded in `[from_tick, to_tick)` starting at the
    /// step's tick, each replacing the live reading of the same sensor.
    ReplayWindow {
        from_tick: u64,
        to_tick: u64,
        origin: String,
        /// Restrict the replay to these sensors; empty replays all.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        sensors: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackStep {
    pub at_tick: u64,
    pub action: AttackAction,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttackScript {
    pub steps: Vec<AttackStep>,
}

impl AttackScript {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks the script before a run over `ticks` ticks.
    pub fn validate(&self, t: &Topology, ticks: u64) -> Vec<ConfigError> {
        let mut errors = Vec::new();
        for (i, step) in self.steps.iter().enumerate() {
            let element = format!("attack[{i}]");
            if step.at_tick >= ticks {
                errors.push(ConfigError::new(
                    &element,
                    "beyond-horizon",
                    format!("at_tick {} is outside the {ticks}-tick horizon", step.at_tick),
                ));
            }
            let origin = match &step.action {
                AttackAction::ForgeSensor { sensor, value, origin } => {
                    match t.sensor(sensor) {
                        None => errors.push(ConfigError::new(&element, "unknown-sensor", format!("no sensor {sensor:?}"))),
                        Some(s) => {
                            if let Some(ty) = t.sensor_type(s) {
                                if !ty.admits(value) {
                                    errors.push(ConfigError::new(
                                        &element,
                                        "value-type",
                                        format!("forged value {value} is not a {ty}"),
                                    ));
                                }
                            }
                        }
                    }
                    origin
                }
                AttackAction::InjectMessage { channel, payload, origin } => {
                    match t.link(channel) {
                        None => errors.push(ConfigError::new(&element, "unknown-channel", format!("no channel {channel:?}"))),
                        Some(l) if !l.payload.admits(payload) => errors.push(ConfigError::new(
                            &element,
                            "value-type",
                            format!("payload {payload} is not a {}", l.payload),
                        )),
                        Some(_) => {}
                    }
                    origin
                }
                AttackAction::ReplayWindow {
                    from_tick,
                    to_tick,
                    origin,
                    sensors,
                } => {
                    if from_tick >= to_tick || *to_tick > step.at_tick {
                        errors.push(ConfigError::new(
                            &element,
                            "replay-window",
                            "window must be non-empty and end at or before at_tick",
                        ));
                    }
                    for s in sensors {
                        if t.sensor(s).is_none() {
                            errors.push(ConfigError::new(&element, "unknown-sensor", format!("no sensor {s:?}")));
                        }
                    }
                    origin
                }
            };
            if !t.has_attachment_point(origin) {
                errors.push(ConfigError::new(
                    &element,
                    "unknown-attachment-point",
                    format!("origin {origin:?} is not a declared attachment point"),
                ));
            }
        }
        errors
    }
}

fn replace_or_push(events: &mut Vec<BusEvent>, sensor: &str, value: SignalValue, origin: &str, template: Option<&BusEvent>) {
    if let Some(e) = events.iter_mut().find(|e| e.sensor() == Some(sensor)) {
        e.value = value;
        e.origin = origin.to_string();
    } else if let Some(t) = template {
        let mut e = t.clone();
        e.value = value;
        e.origin = origin.to_string();
        e.seq = events.len() as u32;
        events.push(e);
    }
}

/// Applies the script's steps for `tick` to the sampled events.
///
/// `history` is the bus traffic recorded at earlier ticks (needed for
/// replays). Replays are applied before forgeries, and injected messages are
/// appended last. Sensor readings are never added: a forged or replayed
/// reading takes the legitimate one's place.
pub fn apply_attacks(
    events: Vec<BusEvent>,
    script: &AttackScript,
    tick: u64,
    history: &[BusEvent],
    topology: &Topology,
) -> Vec<BusEvent> {
    let mut events = events;
    for step in &script.steps {
        if let AttackAction::ReplayWindow {
            from_tick,
            to_tick,
            origin,
            sensors,
        } = &step.action
        {
            let len = to_tick.saturating_sub(*from_tick);
            if tick < step.at_tick || tick >= step.at_tick + len {
                continue;
            }
            let source_tick = from_tick + (tick - step.at_tick);
            for recorded in history.iter().filter(|e| e.tick == source_tick) {
                let Some(sensor) = recorded.sensor() else { continue };
                if !sensors.is_empty() && !sensors.iter().any(|s| s == sensor) {
                    continue;
                }
                let mut template = recorded.clone();
                template.tick = tick;
                replace_or_push(&mut events, sensor, recorded.value.clone(), origin, Some(&template));
            }
        }
    }
    for step in script.steps.iter().filter(|s| s.at_tick == tick) {
        if let AttackAction::ForgeSensor { sensor, value, origin } = &step.action {
            let template = topology.sensor(sensor).and_then(|s| {
                Some(BusEvent {
                    tick,
                    kind: BusEventKind::SensorReading {
                        sensor: s.id.clone(),
                        var: topology.sensor_var(s)?,
                        feature: s.measures.clone(),
                    },
                    value: value.clone(),
                    origin: origin.clone(),
                    seq: 0,
                })
            });
            replace_or_push(&mut events, sensor, value.clone(), origin, template.as_ref());
        }
    }
    for step in script.steps.iter().filter(|s| s.at_tick == tick) {
        if let AttackAction::InjectMessage { channel, payload, origin } = &step.action {
            let Some(link) = topology.link(channel) else { continue };
            let seq = events.len() as u32;
            events.push(BusEvent {
                tick,
                kind: BusEventKind::InterPlcMessage {
                    channel: channel.clone(),
                    from: link.from.clone(),
                    to: link.to.clone(),
                },
                value: payload.clone(),
                origin: origin.clone(),
                seq,
            });
        }
    }
    events
}
