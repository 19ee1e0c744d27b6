use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::attack::{apply_attacks, AttackScript};
use super::bus::{sample_sensors, BusEvent, BusEventKind};
use super::dynamics::{step_plant, validate_disturbances, Disturbance, PlantParams, PlantState};
use crate::logic::{scan, typecheck_program, InboxMessage, PlcProgram, ProgramImage, TypeError};
use crate::model::{timestamp_ms, validate_topology, ConfigError, ModelError, SignalValue, Timestamp, Topology, VariableRef};
use crate::trace::{Phase, RecordKind, TraceHeader, TraceLog, TraceRecord, VarInfo, TRACE_SCHEMA};

/// The static part of a scenario: devices, logic and physics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub topology: Topology,
    pub programs: Vec<PlcProgram>,
    pub plant: PlantParams,
}

/// Command issued from the HMI, bypassing the PLC program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorAction {
    pub at_tick: u64,
    pub actuator: String,
    pub value: SignalValue,
    pub operator: String,
    pub origin: String,
}

/// Time-driven inputs of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEvents {
    #[serde(default)]
    pub attack: AttackScript,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    #[serde(default)]
    pub operator: Vec<OperatorAction>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub ticks: u64,
    pub seed: u64,
    pub scenario: String,
    pub scenario_hash: String,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {}", join(.0))]
    Config(Vec<ConfigError>),
    #[error("program type errors: {}", join(.0))]
    Type(Vec<TypeError>),
    #[error(transparent)]
    Time(#[from] ModelError),
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

/// Runs every load-time check a simulation depends on.
pub fn validate_world(world: &World, events: &RunEvents, ticks: u64) -> Result<(), SimError> {
    let t = &world.topology;
    let mut errors = validate_topology(t);
    errors.extend(world.plant.validate(t));
    errors.extend(validate_disturbances(&events.disturbances, t));
    errors.extend(events.attack.validate(t, ticks));
    for (i, op) in events.operator.iter().enumerate() {
        let element = format!("operator[{i}]");
        match t.actuator(&op.actuator) {
            None => errors.push(ConfigError::new(&element, "unknown-actuator", format!("no actuator {:?}", op.actuator))),
            Some(a) if !a.commands.admits(&op.value) => {
                errors.push(ConfigError::new(&element, "value-type", format!("{} is not a command of {}", op.value, a.id)))
            }
            Some(_) => {}
        }
        if !t.has_attachment_point(&op.origin) {
            errors.push(ConfigError::new(&element, "unknown-attachment-point", format!("origin {:?}", op.origin)));
        }
        if op.at_tick >= ticks {
            errors.push(ConfigError::new(&element, "beyond-horizon", format!("at_tick {}", op.at_tick)));
        }
    }
    let mut per_plc: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &world.programs {
        *per_plc.entry(&p.plc).or_default() += 1;
    }
    for (plc, n) in per_plc {
        if n > 1 {
            errors.push(ConfigError::new(format!("program:{plc}"), "duplicate-program", format!("{n} programs for one PLC")));
        }
    }
    if !errors.is_empty() {
        errors.sort();
        return Err(SimError::Config(errors));
    }
    let type_errors: Vec<TypeError> = world.programs.iter().flat_map(|p| typecheck_program(p, t)).collect();
    if !type_errors.is_empty() {
        return Err(SimError::Type(type_errors));
    }
    Ok(())
}

fn var_info(v: &VariableRef) -> VarInfo {
    VarInfo {
        name: v.name.clone(),
        dir: v.dir,
        line: v.line.clone(),
    }
}

struct Plc {
    image: ProgramImage,
    location: String,
    state: BTreeMap<String, SignalValue>,
}

/// Simulates `cfg.ticks` scan cycles and returns the full trace.
///
/// Each tick runs six phases in order: sample sensors, apply attacks,
/// deliver inputs and the previous tick's messages, scan every PLC, publish
/// commands and messages, step the plant. Scan faults are recorded in the
/// trace and the faulting PLC writes nothing that tick.
pub fn run_simulation(world: &World, events: &RunEvents, cfg: &RunConfig) -> Result<TraceLog, SimError> {
    validate_world(world, events, cfg.ticks)?;
    let t = &world.topology;

    let mut plcs: BTreeMap<String, Plc> = BTreeMap::new();
    for spec in &t.plcs {
        let program = world
            .programs
            .iter()
            .find(|p| p.plc == spec.id)
            .cloned()
            .unwrap_or_else(|| PlcProgram {
                plc: spec.id.clone(),
                internal: Vec::new(),
                rules: Vec::new(),
            });
        let image = ProgramImage::new(&program, t);
        let state = image.initial_state();
        plcs.insert(
            spec.id.clone(),
            Plc {
                image,
                location: spec.location.clone(),
                state,
            },
        );
    }

    let mut log = TraceLog::new(TraceHeader {
        schema: TRACE_SCHEMA.to_string(),
        scenario: cfg.scenario.clone(),
        scenario_hash: cfg.scenario_hash.clone(),
        seed: cfg.seed,
        ticks: cfg.ticks,
        ms_per_tick: t.ms_per_tick,
    });
    let mut plant = PlantState::initial(t);
    let mut history: Vec<BusEvent> = Vec::new();
    let mut pending: Vec<(String, InboxMessage)> = Vec::new();

    for tick in 0..cfg.ticks {
        let ms = timestamp_ms(Timestamp::new(tick, t.ms_per_tick))?;
        let mut recs: Vec<TraceRecord> = Vec::new();

        // sample + attack
        let sampled = sample_sensors(&plant, t, &world.plant, cfg.seed, tick);
        let bus = apply_attacks(sampled, &events.attack, tick, &history, t);
        let mut inputs: BTreeMap<String, BTreeMap<String, SignalValue>> = BTreeMap::new();
        let mut next_pending: Vec<(String, InboxMessage)> = Vec::new();
        for e in &bus {
            match &e.kind {
                BusEventKind::SensorReading { sensor, var, feature } => {
                    let mut r = TraceRecord::new(tick, ms, Phase::Sample, RecordKind::SensorReading, 0);
                    r.plc = Some(var.plc.clone());
                    r.var = Some(var_info(var));
                    r.value = Some(e.value.clone());
                    r.origin = Some(e.origin.clone());
                    r.device = Some(sensor.clone());
                    r.feature = Some(feature.clone());
                    recs.push(r);
                    inputs.entry(var.plc.clone()).or_default().insert(var.name.clone(), e.value.clone());
                }
                BusEventKind::InterPlcMessage { channel, from, to } => {
                    let mut r = TraceRecord::new(tick, ms, Phase::Attack, RecordKind::Message, 0);
                    r.plc = Some(from.clone());
                    r.value = Some(e.value.clone());
                    r.origin = Some(e.origin.clone());
                    r.channel = Some(channel.clone());
                    r.to = Some(to.clone());
                    recs.push(r);
                    next_pending.push((
                        to.clone(),
                        InboxMessage {
                            channel: channel.clone(),
                            payload: e.value.clone(),
                        },
                    ));
                }
                BusEventKind::ActuatorCommand { .. } => {}
            }
        }
        history.extend(bus.into_iter().filter(|e| e.sensor().is_some()));

        // deliver
        let mut inboxes: BTreeMap<String, Vec<InboxMessage>> = BTreeMap::new();
        for (to, msg) in pending.drain(..) {
            inboxes.entry(to).or_default().push(msg);
        }

        // scan + publish
        let mut publish: Vec<TraceRecord> = Vec::new();
        for (id, plc) in plcs.iter_mut() {
            let mut snapshot = inputs.remove(id).unwrap_or_default();
            for decl in plc.image.inputs() {
                snapshot.entry(decl.name.clone()).or_insert_with(|| decl.initial_value());
            }
            let inbox = inboxes.remove(id).unwrap_or_default();
            let mut boundary = TraceRecord::new(tick, ms, Phase::Scan, RecordKind::Scan, 0);
            boundary.plc = Some(id.clone());
            recs.push(boundary);
            match scan(&plc.image, &plc.state, &snapshot, &inbox, tick) {
                Err(fault) => {
                    log::debug!("{fault}");
                    let mut r = TraceRecord::new(tick, ms, Phase::Scan, RecordKind::ScanFault, 0);
                    r.plc = Some(id.clone());
                    r.rule = fault.rule;
                    r.fault = Some(fault.message);
                    recs.push(r);
                }
                Ok(result) => {
                    for w in &result.outputs_written {
                        let reads = Some(plc.image.read_sets[w.rule].clone());
                        if let Some(act) = t.actuator_for(id, &w.var.name) {
                            let mut r = TraceRecord::new(tick, ms, Phase::Publish, RecordKind::ActuatorCommand, 0);
                            r.plc = Some(id.clone());
                            r.var = Some(var_info(&w.var));
                            r.value = Some(w.value.clone());
                            r.origin = Some(plc.location.clone());
                            r.device = Some(act.id.clone());
                            r.affects = act.affects.clone();
                            r.rule = Some(w.rule);
                            r.reads = reads;
                            publish.push(r);
                        } else {
                            let mut r = TraceRecord::new(tick, ms, Phase::Scan, RecordKind::VarWrite, 0);
                            r.plc = Some(id.clone());
                            r.var = Some(var_info(&w.var));
                            r.value = Some(w.value.clone());
                            r.rule = Some(w.rule);
                            r.reads = reads;
                            recs.push(r);
                        }
                    }
                    for m in &result.messages_sent {
                        let mut r = TraceRecord::new(tick, ms, Phase::Publish, RecordKind::Message, 0);
                        r.plc = Some(id.clone());
                        r.value = Some(m.payload.clone());
                        r.origin = Some(plc.location.clone());
                        r.channel = Some(m.channel.clone());
                        r.to = Some(m.to.clone());
                        r.rule = Some(m.rule);
                        r.reads = Some(plc.image.read_sets[m.rule].clone());
                        publish.push(r);
                        next_pending.push((
                            m.to.clone(),
                            InboxMessage {
                                channel: m.channel.clone(),
                                payload: m.payload.clone(),
                            },
                        ));
                    }
                    for w in result.outputs_written {
                        plc.state.insert(w.var.name, w.value);
                    }
                }
            }
        }

        for op in events.operator.iter().filter(|o| o.at_tick == tick) {
            let Some(act) = t.actuator(&op.actuator) else { continue };
            let Some(var) = t.actuator_var(act) else { continue };
            let mut r = TraceRecord::new(tick, ms, Phase::Publish, RecordKind::ActuatorCommand, 0);
            r.plc = Some(act.plc.clone());
            r.var = Some(var_info(&var));
            r.value = Some(op.value.clone());
            r.origin = Some(op.origin.clone());
            r.device = Some(act.id.clone());
            r.affects = act.affects.clone();
            r.operator = Some(op.operator.clone());
            publish.push(r);
            if let Some(p) = plcs.get_mut(&act.plc) {
                p.state.insert(var.name.clone(), act.commands.coerce(op.value.clone()));
            }
        }
        recs.extend(publish);

        // canonical order and per-tick sequence numbers
        recs.sort_by(|a, b| (a.phase, a.plc.as_deref()).cmp(&(b.phase, b.plc.as_deref())));
        for (i, r) in recs.iter_mut().enumerate() {
            r.seq = i as u32;
        }
        log.records.extend(recs);
        pending = next_pending;

        // step
        let commands: BTreeMap<String, SignalValue> = t
            .actuators
            .iter()
            .filter_map(|a| {
                let v = plcs.get(&a.plc)?.state.get(&a.variable)?;
                Some((a.id.clone(), v.clone()))
            })
            .collect();
        plant = step_plant(&plant, &commands, &world.plant, t, &events.disturbances);
    }
    Ok(log)
}
