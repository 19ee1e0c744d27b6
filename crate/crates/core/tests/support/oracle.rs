//! Brute-force policy evaluation over a trace and its reference graph.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Map, Value};

use plcprov_core::model::{SignalValue, Topology};
use plcprov_core::policy::{Permit, Policy, PolicyKind, PolicyMatch, Predicate};
use plcprov_core::provenance::{AgentKind, ENGINEERING_WORKSTATION};
use plcprov_core::trace::{RecordKind, TraceRecord};

use super::reference::{Key, Keyed, Reference};

/// A match with node ids replaced by structural keys.
#[derive(Debug, Clone, PartialEq)]
pub struct NormMatch {
    pub policy_id: String,
    pub span: [u64; 2],
    pub focus: BTreeSet<Key>,
    pub nodes: BTreeSet<Key>,
    pub impact: BTreeSet<Key>,
    pub values: Vec<SignalValue>,
    pub detail: Map<String, Value>,
}

pub fn normalize(m: &PolicyMatch, k: &Keyed) -> NormMatch {
    let set = |ids: &[String]| ids.iter().map(|i| k.by_id[i].clone()).collect();
    NormMatch {
        policy_id: m.policy_id.clone(),
        span: m.tick_span,
        focus: set(&m.witness.focus),
        nodes: set(&m.witness.nodes),
        impact: set(&m.witness.impact),
        values: m.witness.values.clone(),
        detail: m.witness.detail.clone(),
    }
}

pub fn sorted(mut v: Vec<NormMatch>) -> Vec<NormMatch> {
    v.sort_by(|a, b| (a.span, &a.focus, &a.nodes).cmp(&(b.span, &b.focus, &b.nodes)));
    v
}

fn num(v: &SignalValue) -> Option<f64> {
    match v {
        SignalValue::Int(i) => Some(*i as f64),
        SignalValue::Float(x) => Some(*x),
        _ => None,
    }
}

fn same(a: &SignalValue, b: &SignalValue) -> bool {
    match (num(a), num(b)) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

fn instant(p: &Predicate, v: &SignalValue) -> bool {
    let cmp = |x: &SignalValue, f: fn(f64, f64) -> bool| matches!((num(v), num(x)), (Some(a), Some(b)) if f(a, b));
    match p {
        Predicate::Eq(x) | Predicate::Becomes(x) => same(v, x),
        Predicate::Ne(x) => !same(v, x),
        Predicate::Gt(x) => cmp(x, |a, b| a > b),
        Predicate::Ge(x) => cmp(x, |a, b| a >= b),
        Predicate::Lt(x) => cmp(x, |a, b| a < b),
        Predicate::Le(x) => cmp(x, |a, b| a <= b),
        Predicate::In(xs) => xs.iter().any(|x| same(v, x)),
        Predicate::Rise { .. } => false,
    }
}

fn distinct(vals: &[SignalValue]) -> Vec<SignalValue> {
    let mut out: Vec<SignalValue> = Vec::new();
    for v in vals {
        if !out.iter().any(|x| same(x, v)) {
            out.push(v.clone());
        }
    }
    out.sort_by(SignalValue::canonical_cmp);
    out
}

pub struct Oracle<'a> {
    pub r: &'a Reference,
    pub t: &'a Topology,
    by_device: BTreeMap<(RecordKind, &'a str), Vec<&'a TraceRecord>>,
    derived: BTreeMap<&'a Key, Vec<&'a Key>>,
}

fn val(r: &TraceRecord) -> SignalValue {
    r.value.clone().unwrap()
}

fn key(r: &TraceRecord) -> Key {
    Key::Rec(r.tick, r.seq)
}

impl<'a> Oracle<'a> {
    pub fn new(r: &'a Reference, t: &'a Topology) -> Self {
        let mut by_device: BTreeMap<(RecordKind, &str), Vec<&TraceRecord>> = BTreeMap::new();
        for x in r.records.values() {
            if let Some(d) = &x.device {
                by_device.entry((x.kind, d)).or_default().push(x);
            }
        }
        let mut derived: BTreeMap<&Key, Vec<&Key>> = BTreeMap::new();
        for (s, d, rel) in &r.edges {
            if *rel == plcprov_core::provenance::Relation::WasDerivedFrom {
                derived.entry(d).or_default().push(s);
            }
        }
        Oracle { r, t, by_device, derived }
    }

    fn of_device(&self, kind: RecordKind, device: &str) -> Vec<&'a TraceRecord> {
        self.by_device.get(&(kind, device)).cloned().unwrap_or_default()
    }

    fn descendants(&self, start: &Key) -> BTreeSet<Key> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(k) = stack.pop() {
            for &s in self.derived.get(k).into_iter().flatten() {
                if seen.insert(s.clone()) {
                    stack.push(s);
                }
            }
        }
        seen
    }

    fn commands(&self, actuator: &str) -> Vec<&'a TraceRecord> {
        self.of_device(RecordKind::ActuatorCommand, actuator)
    }

    fn readings(&self, sensor: &str) -> Vec<&'a TraceRecord> {
        self.of_device(RecordKind::SensorReading, sensor)
    }

    fn impact(&self, r: &TraceRecord) -> BTreeSet<Key> {
        self.descendants(&key(r))
            .into_iter()
            .filter(|k| self.r.record(k).is_some_and(|x| x.kind == RecordKind::ActuatorCommand))
            .collect()
    }

    pub fn evaluate(&self, p: &Policy) -> Vec<NormMatch> {
        let mk = |span: [u64; 2], focus: BTreeSet<Key>, nodes: BTreeSet<Key>, impact, values, detail: Value| NormMatch {
            policy_id: p.id.clone(),
            span,
            focus,
            nodes,
            impact,
            values,
            detail: detail.as_object().unwrap().clone(),
        };
        let mut out = Vec::new();
        match &p.kind {
            PolicyKind::DuplicateActuation { actuator, within_ticks: w }
            | PolicyKind::ConflictingCommands { actuator, within_ticks: w } => {
                let conflict = matches!(p.kind, PolicyKind::ConflictingCommands { .. });
                let cmds = self.commands(actuator);
                let starts: BTreeSet<u64> = cmds.iter().map(|c| c.tick).collect();
                for t in starts {
                    let inside: Vec<&TraceRecord> = cmds.iter().copied().filter(|c| c.tick >= t && c.tick < t.saturating_add(*w)).collect();
                    if inside.len() < 2 {
                        continue;
                    }
                    let keys: BTreeSet<Key> = inside.iter().map(|c| key(c)).collect();
                    let values: Vec<SignalValue> = inside.iter().map(|c| val(c)).collect();
                    let d = distinct(&values);
                    let span = [t, t.saturating_add(*w)];
                    if !conflict {
                        let detail = json!({"actuator": actuator, "commands": inside.len(), "distinct_values": d.len()});
                        out.push(mk(span, keys.clone(), keys, BTreeSet::new(), values, detail));
                    } else if d.len() >= 2 {
                        let detail = json!({"actuator": actuator, "classification": "different", "commands": inside.len()});
                        out.push(mk(span, keys.clone(), keys, BTreeSet::new(), d, detail));
                    }
                }
            }
            PolicyKind::RangeExcursion { sensor, min_duration_ticks } => {
                let [lo, hi] = self.t.sensor(sensor).unwrap().normal_range.unwrap();
                let series = self.readings(sensor);
                let bad = |r: &TraceRecord| num(&val(r)).is_some_and(|x| !(lo <= x && x <= hi));
                let mut runs: Vec<(usize, usize)> = Vec::new();
                for (i, r) in series.iter().enumerate() {
                    if !bad(r) {
                        continue;
                    }
                    match runs.last_mut() {
                        Some((_, end)) if *end == i => *end = i + 1,
                        _ => runs.push((i, i + 1)),
                    }
                }
                for (a, b) in runs {
                    let run = &series[a..b];
                    let (first, last) = (run[0].tick, run[run.len() - 1].tick);
                    if last - first + 1 < *min_duration_ticks {
                        continue;
                    }
                    let before = a.checked_sub(1).map(|j| series[j]);
                    let after = series.get(b).copied();
                    let span = [before.map_or(0, |r| r.tick), after.map_or(u64::MAX, |r| r.tick + 1)];
                    let focus: BTreeSet<Key> = run.iter().map(|r| key(r)).collect();
                    let nodes = focus.iter().cloned().chain(before.map(key)).chain(after.map(key)).collect();
                    let detail = json!({"sensor": sensor, "first_tick": first, "last_tick": last,
                        "duration": last - first + 1, "readings": run.len(), "closed_at_horizon": after.is_none()});
                    out.push(mk(span, focus, nodes, BTreeSet::new(), run.iter().map(|r| val(r)).collect(), detail));
                }
            }
            PolicyKind::FeatureContention { feature, max_concurrent } => {
                let mut per_tick: BTreeMap<u64, BTreeSet<&str>> = BTreeMap::new();
                for r in self.r.records.values().filter(|r| r.kind == RecordKind::ActuatorCommand) {
                    if r.affects.contains(feature) {
                        per_tick.entry(r.tick).or_default().insert(r.device.as_deref().unwrap());
                    }
                }
                for (t, devs) in per_tick {
                    if devs.len() <= *max_concurrent {
                        continue;
                    }
                    let keys: BTreeSet<Key> = devs.iter().map(|d| Key::Act(d.to_string(), t)).collect();
                    let detail = json!({"feature": feature, "actuators": devs, "count": devs.len(), "max_concurrent": max_concurrent});
                    out.push(mk([t, t + 1], keys.clone(), keys, BTreeSet::new(), Vec::new(), detail));
                }
            }
            PolicyKind::Guard {
                actuator,
                command_value,
                permit,
            } => {
                for c in self.commands(actuator) {
                    if !same(&val(c), command_value) {
                        continue;
                    }
                    let lineage = self.r.lineage(&key(c));
                    if self.permits(&lineage, permit) {
                        continue;
                    }
                    let mut nodes = lineage.clone();
                    for k in &lineage {
                        nodes.extend(self.r.agents_of(k).into_iter().cloned());
                    }
                    let min = lineage.iter().filter_map(|k| self.r.record(k)).map(|r| r.tick).min().unwrap();
                    let sensors: BTreeSet<&str> = lineage
                        .iter()
                        .filter_map(|k| self.r.record(k))
                        .filter(|r| r.kind == RecordKind::SensorReading)
                        .map(|r| r.device.as_deref().unwrap())
                        .collect();
                    let detail = json!({"actuator": actuator, "lineage_sensors": sensors});
                    out.push(mk([min.saturating_sub(1), c.tick + 1], BTreeSet::from([key(c)]), nodes, BTreeSet::new(), vec![val(c)], detail));
                }
            }
            PolicyKind::Correlation {
                trigger_sensor,
                trigger_predicate: tp,
                corroborating_sensor,
                corroborating_predicate: cp,
                window_ticks: w,
            } => {
                let trig = self.readings(trigger_sensor);
                let corr = self.readings(corroborating_sensor);
                let back = |p: &Predicate| match p {
                    Predicate::Becomes(_) => 1,
                    Predicate::Rise { over_ticks, .. } => *over_ticks,
                    _ => 0,
                };
                for r in &trig {
                    if !holds_at(&trig, r, tp) {
                        continue;
                    }
                    let t = r.tick;
                    let lo = t.saturating_sub(*w);
                    let hi = t + w + 1;
                    if corr.iter().any(|c| c.tick >= lo && c.tick < hi && holds_at(&corr, c, cp)) {
                        continue;
                    }
                    let tb = t.saturating_sub(back(tp));
                    let start = tb.min(lo.saturating_sub(back(cp)));
                    let mut nodes = BTreeSet::from([key(r)]);
                    nodes.extend(trig.iter().filter(|x| x.tick >= tb && x.tick < t).map(|x| key(x)));
                    nodes.extend(corr.iter().filter(|x| x.tick >= start && x.tick < hi).map(|x| key(x)));
                    let detail = json!({"trigger_sensor": trigger_sensor, "trigger_tick": t,
                        "corroborating_sensor": corroborating_sensor, "window_ticks": w});
                    out.push(mk([start, hi], BTreeSet::from([key(r)]), nodes, self.impact(r), vec![val(r)], detail));
                }
            }
            PolicyKind::SourceBinding {
                sensor,
                expected_origin_point,
            } => {
                for r in self.readings(sensor) {
                    let o = r.origin.as_deref().unwrap();
                    if o == expected_origin_point {
                        continue;
                    }
                    let nodes = BTreeSet::from([key(r), Key::Agent(AgentKind::OriginPoint, o.to_string())]);
                    let detail = json!({"sensor": sensor, "origin": o, "expected_origin_point": expected_origin_point});
                    out.push(mk([r.tick, r.tick + 1], BTreeSet::from([key(r)]), nodes, self.impact(r), vec![val(r)], detail));
                }
            }
        }
        out
    }

    fn permits(&self, lineage: &BTreeSet<Key>, p: &Permit) -> bool {
        match p {
            Permit::AnyOf(ps) => ps.iter().any(|q| self.permits(lineage, q)),
            Permit::AllOf(ps) => ps.iter().all(|q| self.permits(lineage, q)),
            Permit::Not(q) => !self.permits(lineage, q),
            Permit::AncestorReading { sensor, pred, origin } => lineage.iter().filter_map(|k| self.r.record(k)).any(|r| {
                r.kind == RecordKind::SensorReading
                    && r.device.as_deref() == Some(sensor)
                    && instant(pred, &val(r))
                    && origin.as_ref().is_none_or(|o| r.origin.as_ref() == Some(o))
            }),
            Permit::Operator { ids } => lineage.iter().any(|k| {
                self.r.agents_of(k).into_iter().any(|a| match a {
                    Key::Agent(AgentKind::Operator, name) => {
                        if ids.is_empty() {
                            name != ENGINEERING_WORKSTATION
                        } else {
                            ids.contains(name)
                        }
                    }
                    _ => false,
                })
            }),
        }
    }
}

/// Predicate on reading `r` of a series, with the temporal forms looking
/// at the same series.
fn holds_at(series: &[&TraceRecord], r: &TraceRecord, p: &Predicate) -> bool {
    let v = val(r);
    let at = |t: u64| {
        let a = series.partition_point(|y| y.tick < t);
        let b = series.partition_point(|y| y.tick <= t);
        &series[a..b]
    };
    match p {
        Predicate::Becomes(x) => same(&v, x) && (r.tick == 0 || !at(r.tick - 1).iter().any(|y| same(&val(y), x))),
        Predicate::Rise { threshold, over_ticks } => {
            let Some(then) = r.tick.checked_sub(*over_ticks) else { return false };
            match (at(then).last(), num(&v)) {
                (Some(y), Some(now)) => num(&val(y)).is_some_and(|b| now - b >= *threshold),
                _ => false,
            }
        }
        other => instant(other, &v),
    }
}
