//! Random worlds: topology, programs, plant, events and policies that pass
//! every load-time check.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use plcprov_core::logic::{Action, Expr, PlcProgram, Rule};
use plcprov_core::model::{
    ActuatorSpec, Direction, EnvironmentFeature, FeatureKind, Link, PlcSpec, SensorSpec, SignalValue, Topology,
    ValueType, VariableDecl,
};
use plcprov_core::plant::{
    ActuatorEffect, AttackAction, AttackScript, AttackStep, Disturbance, FeatureDynamics, OperatorAction, PlantParams,
    RunConfig, RunEvents, World,
};
use plcprov_core::policy::{validate_policy, Permit, Policy, PolicyKind, Predicate, Severity};

pub const POINTS: [&str; 3] = ["ap0", "ap1", "ap2"];
pub const OPERATORS: [&str; 2] = ["op0", "op1"];

pub struct Case {
    pub world: World,
    pub events: RunEvents,
    pub cfg: RunConfig,
}

#[derive(Clone, Copy)]
pub struct Limits {
    pub plcs: usize,
    pub sensors: usize,
    pub actuators: usize,
    pub ticks: u64,
}

pub const LIMITS: Limits = Limits {
    plcs: 5,
    sensors: 10,
    actuators: 10,
    ticks: 300,
};

fn members(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn random_value(rng: &mut ChaCha8Rng, ty: &ValueType, around: f64) -> SignalValue {
    match ty {
        ValueType::Bool => SignalValue::Bool(rng.random_bool(0.5)),
        ValueType::Int => SignalValue::Int(rng.random_range(0..20)),
        ValueType::Float => SignalValue::Float(around + rng.random_range(-10.0..10.0)),
        ValueType::Enum(set) => SignalValue::Enum(set.choose(rng).expect("non-empty enum").clone()),
    }
}

struct Var {
    name: String,
    ty: ValueType,
    dir: Direction,
}

fn condition(rng: &mut ChaCha8Rng, readable: &[Var], inbound: &[(String, ValueType)]) -> Expr {
    let n = rng.random_range(1..=3);
    let mut atoms = Vec::new();
    for _ in 0..n {
        let use_channel = !inbound.is_empty() && (readable.is_empty() || rng.random_bool(0.3));
        if use_channel {
            let (ch, ty) = inbound.choose(rng).unwrap();
            let test = match ty {
                ValueType::Float => Expr::Gt(Box::new(Expr::Msg(ch.clone())), Box::new(Expr::Lit(SignalValue::Float(rng.random_range(0.0..20.0))))),
                _ => Expr::Eq(Box::new(Expr::Msg(ch.clone())), Box::new(Expr::Lit(random_value(rng, ty, 10.0)))),
            };
            atoms.push(Expr::And(vec![Expr::Received(ch.clone()), test]));
            continue;
        }
        let Some(v) = readable.choose(rng) else {
            atoms.push(Expr::Lit(SignalValue::Bool(rng.random_bool(0.7))));
            continue;
        };
        let var = || Box::new(Expr::Var(v.name.clone()));
        atoms.push(match &v.ty {
            ValueType::Bool => {
                if rng.random_bool(0.5) {
                    Expr::Var(v.name.clone())
                } else {
                    Expr::Not(var())
                }
            }
            ValueType::Float => {
                let c = Box::new(Expr::Lit(SignalValue::Float(rng.random_range(0.0..20.0))));
                if rng.random_bool(0.5) {
                    Expr::Gt(var(), c)
                } else {
                    Expr::Le(var(), c)
                }
            }
            ValueType::Int => {
                let c = Box::new(Expr::Lit(SignalValue::Int(rng.random_range(0..6))));
                if rng.random_bool(0.5) {
                    Expr::Ge(Box::new(Expr::Elapsed(v.name.clone())), c)
                } else {
                    Expr::Lt(var(), c)
                }
            }
            ValueType::Enum(set) => {
                if rng.random_bool(0.5) {
                    Expr::Eq(var(), Box::new(Expr::Lit(SignalValue::Enum(set.choose(rng).unwrap().clone()))))
                } else {
                    let k = rng.random_range(1..=set.len());
                    Expr::In(var(), set[..k].iter().cloned().map(SignalValue::Enum).collect())
                }
            }
        });
    }
    match (atoms.len(), rng.random_bool(0.6)) {
        (1, _) => atoms.pop().unwrap(),
        (_, true) => Expr::And(atoms),
        (_, false) => Expr::Or(atoms),
    }
}

fn value_expr(rng: &mut ChaCha8Rng, ty: &ValueType, readable: &[Var]) -> Expr {
    if *ty == ValueType::Int && rng.random_bool(0.5) {
        return Expr::Tick;
    }
    let same: Vec<&Var> = readable.iter().filter(|v| &v.ty == ty).collect();
    if !same.is_empty() && rng.random_bool(0.3) {
        return Expr::Var(same.choose(rng).unwrap().name.clone());
    }
    Expr::Lit(random_value(rng, ty, 10.0))
}

fn rules(rng: &mut ChaCha8Rng, vars: &[Var], inbound: &[(String, ValueType)], outbound: &[(String, ValueType)]) -> Vec<Rule> {
    let writable: Vec<&Var> = vars.iter().filter(|v| v.dir != Direction::In).collect();
    if writable.is_empty() && outbound.is_empty() {
        return Vec::new();
    }
    let n = rng.random_range(0..=6);
    (0..n)
        .map(|_| {
            let mut when = condition(rng, vars, inbound);
            let mut then = Vec::new();
            for _ in 0..rng.random_range(1..=3) {
                let send = !outbound.is_empty() && (writable.is_empty() || rng.random_bool(0.3));
                if send {
                    let (ch, ty) = outbound.choose(rng).unwrap();
                    then.push(Action::Send {
                        channel: ch.clone(),
                        payload: value_expr(rng, ty, vars),
                    });
                } else {
                    let v = writable.choose(rng).unwrap();
                    then.push(Action::Set {
                        var: v.name.clone(),
                        value: value_expr(rng, &v.ty, vars),
                    });
                }
            }
            // an edge-triggered guard keeps some rules from firing every tick
            if let (Some(Action::Set { var, value: Expr::Lit(v) }), true) = (then.first(), rng.random_bool(0.5)) {
                when = Expr::And(vec![when, Expr::Ne(Box::new(Expr::Var(var.clone())), Box::new(Expr::Lit(v.clone())))]);
            }
            Rule { name: None, when, then }
        })
        .collect()
}

fn feature_type(rng: &mut ChaCha8Rng) -> (FeatureKind, ValueType) {
    match rng.random_range(0..3) {
        0 | 1 => (FeatureKind::Continuous, ValueType::Float),
        _ if rng.random_bool(0.5) => (FeatureKind::Discrete, ValueType::Bool),
        _ => (FeatureKind::Discrete, ValueType::Enum(members("e", 3))),
    }
}

pub fn random_case(seed: u64, lim: Limits) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let n_plcs = rng.random_range(1..=lim.plcs);
    let n_features = rng.random_range(1..=6);
    let n_sensors = rng.random_range(0..=lim.sensors);
    let n_actuators = rng.random_range(0..=lim.actuators);
    let ticks = rng.random_range(1..=lim.ticks);

    let mut plcs: Vec<PlcSpec> = (0..n_plcs)
        .map(|i| PlcSpec {
            id: format!("p{i}"),
            location: POINTS.choose(rng).unwrap().to_string(),
            variables: Vec::new(),
        })
        .collect();
    let features: Vec<EnvironmentFeature> = (0..n_features)
        .map(|i| {
            let (kind, ty) = feature_type(rng);
            let initial = random_value(rng, &ty, 10.0);
            EnvironmentFeature {
                id: format!("f{i}"),
                kind,
                unit: String::new(),
                ty,
                initial,
            }
        })
        .collect();

    let mut plant = PlantParams::default();
    for f in &features {
        if rng.random_bool(0.7) {
            let ambient = rng.random_bool(0.6).then(|| random_value(rng, &f.ty, 10.0));
            plant.features.insert(
                f.id.clone(),
                FeatureDynamics {
                    alpha: rng.random_range(0.05..=1.0),
                    ambient,
                    decay: rng.random_range(0.0..=0.5),
                },
            );
        }
    }

    let mut sensors = Vec::new();
    for i in 0..n_sensors {
        let f = features.choose(rng).unwrap();
        let p = rng.random_range(0..n_plcs);
        let var = format!("s{i}_in");
        plcs[p].variables.push(VariableDecl {
            name: var.clone(),
            dir: Direction::In,
            ty: f.ty.clone(),
            line: Some(format!("I0.{i}")),
            initial: None,
        });
        let numeric = f.ty == ValueType::Float;
        let normal_range = (numeric && rng.random_bool(0.6)).then(|| {
            let lo = rng.random_range(0.0..10.0);
            [lo, lo + rng.random_range(0.0..12.0)]
        });
        let id = format!("s{i}");
        if numeric && rng.random_bool(0.5) {
            plant.sensor_noise.insert(id.clone(), rng.random_range(0.0..2.0));
        }
        sensors.push(SensorSpec {
            id,
            measures: f.id.clone(),
            plc: plcs[p].id.clone(),
            variable: var,
            normal_range,
            unit: String::new(),
            origin: if rng.random_bool(0.8) { plcs[p].location.clone() } else { POINTS.choose(rng).unwrap().to_string() },
        });
    }

    let mut actuators = Vec::new();
    for i in 0..n_actuators {
        let p = rng.random_range(0..n_plcs);
        let ty = if rng.random_bool(0.5) { ValueType::Bool } else { ValueType::Enum(members("c", 3)) };
        let var = format!("a{i}_out");
        plcs[p].variables.push(VariableDecl {
            name: var.clone(),
            dir: Direction::Out,
            ty: ty.clone(),
            line: Some(format!("Q0.{i}")),
            initial: None,
        });
        let k = rng.random_range(1..=2.min(features.len()));
        let mut affects: Vec<String> = features.choose_multiple(rng, k).map(|f| f.id.clone()).collect();
        affects.sort();
        let commands: Vec<SignalValue> = match &ty {
            ValueType::Bool => vec![SignalValue::Bool(true), SignalValue::Bool(false)],
            ValueType::Enum(set) => set.iter().cloned().map(SignalValue::Enum).collect(),
            _ => unreachable!(),
        };
        let id = format!("a{i}");
        for f in &affects {
            let fty = &features.iter().find(|x| &x.id == f).unwrap().ty;
            for c in &commands {
                if rng.random_bool(0.6) {
                    plant.effects.push(ActuatorEffect {
                        actuator: id.clone(),
                        command: c.clone(),
                        feature: f.clone(),
                        target: random_value(rng, fty, 10.0),
                    });
                }
            }
        }
        actuators.push(ActuatorSpec {
            id,
            affects,
            plc: plcs[p].id.clone(),
            variable: var,
            commands: ty,
        });
    }

    let mut links = Vec::new();
    if n_plcs > 1 {
        for i in 0..rng.random_range(0..=4) {
            let from = rng.random_range(0..n_plcs);
            let mut to = rng.random_range(0..n_plcs - 1);
            if to >= from {
                to += 1;
            }
            links.push(Link {
                channel: format!("ch{i}"),
                from: plcs[from].id.clone(),
                to: plcs[to].id.clone(),
                payload: if rng.random_bool(0.5) { ValueType::Bool } else { ValueType::Float },
            });
        }
    }

    let mut programs = Vec::new();
    for plc in &plcs {
        let internal: Vec<VariableDecl> = (0..rng.random_range(0..=2))
            .map(|i| VariableDecl {
                name: format!("m{i}"),
                dir: Direction::Internal,
                ty: if rng.random_bool(0.5) { ValueType::Bool } else { ValueType::Int },
                line: None,
                initial: None,
            })
            .collect();
        let vars: Vec<Var> = plc
            .variables
            .iter()
            .chain(&internal)
            .map(|v| Var {
                name: v.name.clone(),
                ty: v.ty.clone(),
                dir: v.dir,
            })
            .collect();
        let inbound: Vec<(String, ValueType)> =
            links.iter().filter(|l| l.to == plc.id).map(|l| (l.channel.clone(), l.payload.clone())).collect();
        let outbound: Vec<(String, ValueType)> =
            links.iter().filter(|l| l.from == plc.id).map(|l| (l.channel.clone(), l.payload.clone())).collect();
        let rules = rules(rng, &vars, &inbound, &outbound);
        if rng.random_bool(0.9) {
            programs.push(PlcProgram {
                plc: plc.id.clone(),
                internal,
                rules,
            });
        }
    }

    let topology = Topology {
        ms_per_tick: 100,
        attachment_points: POINTS.iter().map(|s| s.to_string()).collect(),
        plcs,
        features,
        sensors,
        actuators,
        links,
    };
    let events = random_events(rng, &topology, ticks);
    let world = World { topology, programs, plant };
    Case {
        world,
        events,
        cfg: RunConfig {
            ticks,
            seed,
            scenario: format!("random-{seed}"),
            scenario_hash: String::new(),
        },
    }
}

fn random_events(rng: &mut ChaCha8Rng, t: &Topology, ticks: u64) -> RunEvents {
    let mut steps = Vec::new();
    for _ in 0..rng.random_range(0..=4) {
        let at_tick = rng.random_range(0..ticks);
        let origin = POINTS.choose(rng).unwrap().to_string();
        let action = match rng.random_range(0..3) {
            0 if !t.sensors.is_empty() => {
                let s = t.sensors.choose(rng).unwrap();
                let ty = t.sensor_type(s).unwrap().clone();
                AttackAction::ForgeSensor {
                    sensor: s.id.clone(),
                    value: random_value(rng, &ty, 10.0),
                    origin,
                }
            }
            1 if !t.links.is_empty() => {
                let l = t.links.choose(rng).unwrap();
                AttackAction::InjectMessage {
                    channel: l.channel.clone(),
                    payload: random_value(rng, &l.payload, 10.0),
                    origin,
                }
            }
            2 if at_tick >= 2 => {
                let to_tick = rng.random_range(1..=at_tick);
                let from_tick = rng.random_range(0..to_tick);
                let sensors = if rng.random_bool(0.5) || t.sensors.is_empty() {
                    Vec::new()
                } else {
                    vec![t.sensors.choose(rng).unwrap().id.clone()]
                };
                AttackAction::ReplayWindow {
                    from_tick,
                    to_tick,
                    origin,
                    sensors,
                }
            }
            _ => continue,
        };
        steps.push(AttackStep { at_tick, action });
    }
    let mut disturbances = Vec::new();
    for _ in 0..rng.random_range(0..=2) {
        let f = t.features.choose(rng).unwrap();
        let from_tick = rng.random_range(0..ticks);
        disturbances.push(Disturbance {
            from_tick,
            to_tick: rng.random_range(from_tick + 1..=ticks),
            feature: f.id.clone(),
            target: random_value(rng, &f.ty, 10.0),
        });
    }
    let mut operator = Vec::new();
    if !t.actuators.is_empty() {
        for _ in 0..rng.random_range(0..=3) {
            let a = t.actuators.choose(rng).unwrap();
            operator.push(OperatorAction {
                at_tick: rng.random_range(0..ticks),
                actuator: a.id.clone(),
                value: random_value(rng, &a.commands, 0.0),
                operator: OPERATORS.choose(rng).unwrap().to_string(),
                origin: "ap0".into(),
            });
        }
    }
    RunEvents {
        attack: AttackScript { steps },
        disturbances,
        operator,
    }
}

fn predicate(rng: &mut ChaCha8Rng, ty: &ValueType, temporal: bool) -> Predicate {
    let pick = rng.random_range(0..if temporal { 6 } else { 4 });
    match (ty, pick) {
        (ValueType::Float, 0) => Predicate::Gt(SignalValue::Float(rng.random_range(0.0..20.0))),
        (ValueType::Float, 1) => Predicate::Le(SignalValue::Float(rng.random_range(0.0..20.0))),
        (ValueType::Float, 2) => Predicate::Ge(SignalValue::Float(rng.random_range(0.0..20.0))),
        (ValueType::Float, 3) => Predicate::Lt(SignalValue::Float(rng.random_range(0.0..20.0))),
        (ValueType::Float, 4) => Predicate::Rise {
            threshold: rng.random_range(-2.0..4.0),
            over_ticks: rng.random_range(1..=4),
        },
        (ValueType::Float, _) => Predicate::Gt(SignalValue::Float(rng.random_range(0.0..20.0))),
        (_, 0) => Predicate::Eq(random_value(rng, ty, 0.0)),
        (_, 1) => Predicate::Ne(random_value(rng, ty, 0.0)),
        (_, 2 | 3) => Predicate::In(vec![random_value(rng, ty, 0.0), random_value(rng, ty, 0.0)]),
        _ => Predicate::Becomes(random_value(rng, ty, 0.0)),
    }
}

fn permit(rng: &mut ChaCha8Rng, t: &Topology, depth: u32, with_workstation: bool) -> Permit {
    let leaf = depth == 0 || rng.random_bool(0.5);
    if leaf {
        if t.sensors.is_empty() || rng.random_bool(0.25) {
            let ids = match rng.random_range(0..3) {
                0 => Vec::new(),
                1 if with_workstation => vec![plcprov_core::provenance::ENGINEERING_WORKSTATION.to_string()],
                _ => vec![OPERATORS.choose(rng).unwrap().to_string()],
            };
            return Permit::Operator { ids };
        }
        let s = t.sensors.choose(rng).unwrap();
        let ty = t.sensor_type(s).unwrap().clone();
        return Permit::AncestorReading {
            sensor: s.id.clone(),
            pred: predicate(rng, &ty, false),
            origin: rng.random_bool(0.5).then(|| POINTS.choose(rng).unwrap().to_string()),
        };
    }
    let n = rng.random_range(1..=2);
    let kids: Vec<Permit> = (0..n).map(|_| permit(rng, t, depth - 1, with_workstation)).collect();
    match rng.random_range(0..3) {
        0 => Permit::AnyOf(kids),
        1 => Permit::AllOf(kids),
        _ => Permit::Not(Box::new(permit(rng, t, depth - 1, with_workstation))),
    }
}

/// A few policies of every kind the topology can support, all valid.
/// `with_workstation` allows operator permits naming the fallback agent.
pub fn random_policies(seed: u64, t: &Topology, with_workstation: bool) -> Vec<Policy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_9011_c1e5);
    let rng = &mut rng;
    let mut kinds = Vec::new();
    for _ in 0..3 {
        if let Some(a) = t.actuators.choose(rng) {
            kinds.push(PolicyKind::DuplicateActuation {
                actuator: a.id.clone(),
                within_ticks: rng.random_range(1..=4),
            });
            kinds.push(PolicyKind::ConflictingCommands {
                actuator: a.id.clone(),
                within_ticks: rng.random_range(1..=4),
            });
            let a = t.actuators.choose(rng).unwrap();
            kinds.push(PolicyKind::Guard {
                actuator: a.id.clone(),
                command_value: random_value(rng, &a.commands, 0.0),
                permit: permit(rng, t, 2, with_workstation),
            });
        }
        let ranged: Vec<&SensorSpec> = t.sensors.iter().filter(|s| s.normal_range.is_some()).collect();
        if let Some(s) = ranged.choose(rng) {
            kinds.push(PolicyKind::RangeExcursion {
                sensor: s.id.clone(),
                min_duration_ticks: rng.random_range(1..=4),
            });
        }
        if let Some(f) = t.features.choose(rng) {
            kinds.push(PolicyKind::FeatureContention {
                feature: f.id.clone(),
                max_concurrent: rng.random_range(1..=2),
            });
        }
        if !t.sensors.is_empty() {
            let a = t.sensors.choose(rng).unwrap();
            let b = t.sensors.choose(rng).unwrap();
            kinds.push(PolicyKind::Correlation {
                trigger_sensor: a.id.clone(),
                trigger_predicate: predicate(rng, t.sensor_type(a).unwrap(), true),
                corroborating_sensor: b.id.clone(),
                corroborating_predicate: predicate(rng, t.sensor_type(b).unwrap(), true),
                window_ticks: rng.random_range(1..=5),
            });
            kinds.push(PolicyKind::SourceBinding {
                sensor: a.id.clone(),
                expected_origin_point: POINTS.choose(rng).unwrap().to_string(),
            });
        }
    }
    let policies: Vec<Policy> = kinds
        .into_iter()
        .enumerate()
        .map(|(i, kind)| Policy {
            id: format!("{}_{i}", kind.name()),
            severity: Severity::Warning,
            description: None,
            kind,
        })
        .collect();
    for (i, p) in policies.iter().enumerate() {
        let errors = validate_policy(p, i, t);
        assert!(errors.is_empty(), "generated policy {} is invalid: {errors:?}", p.id);
    }
    policies
}
