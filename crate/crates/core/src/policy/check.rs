use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{Permit, Policy, PolicyError, PolicyKind, Predicate};
use crate::model::{SignalValue, Topology};
use crate::provenance::{AgentKind, NodeId, ProvGraph, ENGINEERING_WORKSTATION};

/// Nodes proving a breach.
///
/// `nodes` is everything the check looked at to decide (re-running the
/// policy on the subgraph they induce reproduces the match), `focus` the
/// nodes the breach is about, and `impact` the commands derived downstream
/// of a suspicious reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub nodes: Vec<NodeId>,
    pub focus: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub impact: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<SignalValue>,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub detail: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMatch {
    pub policy_id: String,
    /// Half-open `[start, end)`: the ticks whose events decide this match.
    pub tick_span: [u64; 2],
    pub witness: Witness,
}

fn ids(g: &ProvGraph, idx: impl IntoIterator<Item = usize>) -> Vec<NodeId> {
    let set: BTreeSet<usize> = idx.into_iter().collect();
    set.into_iter().map(|i| g.node_at(i).id.clone()).collect()
}

fn tick(g: &ProvGraph, i: usize) -> u64 {
    g.node_at(i).attrs.tick.unwrap_or(0)
}

fn value(g: &ProvGraph, i: usize) -> Option<&SignalValue> {
    g.node_at(i).attrs.value.as_ref()
}

/// Attachment point of a reading: its origin agent, else its origin attribute.
fn origin(g: &ProvGraph, i: usize) -> Option<&str> {
    g.attributed_agent(i, AgentKind::OriginPoint)
        .and_then(|a| a.attrs.name.as_deref())
        .or(g.node_at(i).attrs.origin.as_deref())
}

/// Readings of `sensor` with `lo <= tick < hi`.
fn readings_between<'g>(g: &'g ProvGraph, sensor: &str, lo: u64, hi: u64) -> &'g [usize] {
    let all = g.reading_indices(sensor);
    let a = all.partition_point(|&i| tick(g, i) < lo);
    let b = all.partition_point(|&i| tick(g, i) < hi);
    &all[a..b.max(a)]
}

fn wrong_kind(p: &Policy, expected: &str) -> PolicyError {
    PolicyError::new(&p.id, format!("expected a {expected} policy, got {}", p.kind.name()))
}

fn commands_in_windows(g: &ProvGraph, actuator: &str, w: u64) -> Vec<(u64, Vec<usize>)> {
    let cmds = g.command_indices(actuator);
    let starts: BTreeSet<u64> = cmds.iter().map(|&i| tick(g, i)).collect();
    starts
        .into_iter()
        .map(|t| {
            let inside: Vec<usize> = cmds.iter().copied().filter(|&i| (t..t.saturating_add(w)).contains(&tick(g, i))).collect();
            (t, inside)
        })
        .filter(|(_, inside)| inside.len() >= 2)
        .collect()
}

fn distinct_values(vals: impl IntoIterator<Item = SignalValue>) -> Vec<SignalValue> {
    let mut out: Vec<SignalValue> = Vec::new();
    for v in vals {
        if !out.iter().any(|x| x.loosely_equals(&v)) {
            out.push(v);
        }
    }
    out.sort_by(SignalValue::canonical_cmp);
    out
}

/// One match per command tick `t` whose window `[t, t + within_ticks)`
/// holds two or more commands for the actuator.
pub fn check_duplicate_actuation(g: &ProvGraph, p: &Policy) -> Result<Vec<PolicyMatch>, PolicyError> {
    let PolicyKind::DuplicateActuation { actuator, within_ticks } = &p.kind else {
        return Err(wrong_kind(p, "duplicate_actuation"));
    };
    Ok(commands_in_windows(g, actuator, *within_ticks)
        .into_iter()
        .map(|(t, cmds)| {
            let values: Vec<SignalValue> = cmds.iter().filter_map(|&i| value(g, i).cloned()).collect();
            let distinct = distinct_values(values.clone()).len();
            let mut detail = Map::new();
            detail.insert("actuator".into(), json!(actuator));
            detail.insert("commands".into(), json!(cmds.len()));
            detail.insert("distinct_values".into(), json!(distinct));
            PolicyMatch {
                policy_id: p.id.clone(),
                tick_span: [t, t.saturating_add(*within_ticks)],
                witness: Witness {
                    nodes: ids(g, cmds.iter().copied()),
                    focus: ids(g, cmds.iter().copied()),
                    impact: Vec::new(),
                    values,
                    detail,
                },
            }
        })
        .collect())
}

/// The duplicate windows in which at least two distinct values were
/// commanded. `values` lists the distinct values.
pub fn classify_conflict(g: &ProvGraph, p: &Policy) -> Result<Vec<PolicyMatch>, PolicyError> {
    let PolicyKind::ConflictingCommands { actuator, within_ticks } = &p.kind else {
        return Err(wrong_kind(p, "conflicting_commands"));
    };
    Ok(commands_in_windows(g, actuator, *within_ticks)
        .into_iter()
        .filter_map(|(t, cmds)| {
            let values = distinct_values(cmds.iter().filter_map(|&i| value(g, i).cloned()));
            if values.len() < 2 {
                return None;
            }
            let mut detail = Map::new();
            detail.insert("actuator".into(), json!(actuator));
            detail.insert("classification".into(), json!("different"));
            detail.insert("commands".into(), json!(cmds.len()));
            Some(PolicyMatch {
                policy_id: p.id.clone(),
                tick_span: [t, t.saturating_add(*within_ticks)],
                witness: Witness {
                    nodes: ids(g, cmds.iter().copied()),
                    focus: ids(g, cmds.iter().copied()),
                    impact: Vec::new(),
                    values,
                    detail,
                },
            })
        })
        .collect())
}

/// Maximal runs of consecutive out-of-range readings lasting at least
/// `min_duration_ticks` (first to last tick inclusive). A run still open at
/// the end of the trace is reported.
///
/// The span reaches the in-range readings bounding the run, from tick 0
/// when there is none before it and without end when there is none after.
pub fn check_range_excursions(g: &ProvGraph, p: &Policy, t: &Topology) -> Result<Vec<PolicyMatch>, PolicyError> {
    let PolicyKind::RangeExcursion { sensor, min_duration_ticks } = &p.kind else {
        return Err(wrong_kind(p, "range_excursion"));
    };
    let spec = t
        .sensor(sensor)
        .ok_or_else(|| PolicyError::new(&p.id, format!("unknown sensor {sensor:?}")))?;
    if spec.normal_range.is_none() {
        return Err(PolicyError::new(&p.id, format!("sensor {sensor:?} has no normal_range")));
    }
    let series = g.reading_indices(sensor);
    let outside = |i: usize| value(g, i).and_then(|v| spec.in_range(v)) == Some(false);
    let mut out = Vec::new();
    let mut k = 0;
    while k < series.len() {
        if !outside(series[k]) {
            k += 1;
            continue;
        }
        let start = k;
        while k < series.len() && outside(series[k]) {
            k += 1;
        }
        let run = &series[start..k];
        let first = tick(g, run[0]);
        let last = tick(g, run[run.len() - 1]);
        let duration = last - first + 1;
        if duration < *min_duration_ticks {
            continue;
        }
        let before = start.checked_sub(1).map(|j| series[j]);
        let after = series.get(k).copied();
        let lo = before.map_or(0, |i| tick(g, i));
        let hi = after.map_or(u64::MAX, |i| tick(g, i).saturating_add(1));
        let mut detail = Map::new();
        detail.insert("sensor".into(), json!(sensor));
        detail.insert("first_tick".into(), json!(first));
        detail.insert("last_tick".into(), json!(last));
        detail.insert("duration".into(), json!(duration));
        detail.insert("readings".into(), json!(run.len()));
        detail.insert("closed_at_horizon".into(), json!(after.is_none()));
        out.push(PolicyMatch {
            policy_id: p.id.clone(),
            tick_span: [lo, hi],
            witness: Witness {
                nodes: ids(g, run.iter().copied().chain(before).chain(after)),
                focus: ids(g, run.iter().copied()),
                impact: Vec::new(),
                values: run.iter().filter_map(|&i| value(g, i).cloned()).collect(),
                detail,
            },
        });
    }
    Ok(out)
}

/// Ticks at which more than `max_concurrent` distinct actuators affecting
/// the feature were actuated.
pub fn check_feature_contention(g: &ProvGraph, p: &Policy) -> Result<Vec<PolicyMatch>, PolicyError> {
    let PolicyKind::FeatureContention { feature, max_concurrent } = &p.kind else {
        return Err(wrong_kind(p, "feature_contention"));
    };
    let mut out = Vec::new();
    for (&t, acts) in g.actuations_by_tick() {
        let hits: Vec<usize> = acts.iter().copied().filter(|&i| g.node_at(i).attrs.affects.contains(feature)).collect();
        let devices: BTreeSet<&str> = hits.iter().filter_map(|&i| g.node_at(i).attrs.device.as_deref()).collect();
        if devices.len() <= *max_concurrent {
            continue;
        }
        let mut detail = Map::new();
        detail.insert("feature".into(), json!(feature));
        detail.insert("actuators".into(), json!(devices));
        detail.insert("count".into(), json!(devices.len()));
        detail.insert("max_concurrent".into(), json!(max_concurrent));
        out.push(PolicyMatch {
            policy_id: p.id.clone(),
            tick_span: [t, t + 1],
            witness: Witness {
                nodes: ids(g, hits.iter().copied()),
                focus: ids(g, hits.iter().copied()),
                impact: Vec::new(),
                values: Vec::new(),
                detail,
            },
        });
    }
    Ok(out)
}

fn permits(g: &ProvGraph, lineage: &BTreeSet<usize>, permit: &Permit) -> bool {
    match permit {
        Permit::AnyOf(ps) => ps.iter().any(|q| permits(g, lineage, q)),
        Permit::AllOf(ps) => ps.iter().all(|q| permits(g, lineage, q)),
        Permit::Not(q) => !permits(g, lineage, q),
        Permit::AncestorReading { sensor, pred, origin: want } => lineage.iter().any(|&i| {
            g.is_reading(i)
                && g.node_at(i).attrs.device.as_deref() == Some(sensor)
                && value(g, i).is_some_and(|v| pred.holds(v))
                && want.as_deref().is_none_or(|o| origin(g, i) == Some(o))
        }),
        Permit::Operator { ids } => lineage.iter().any(|&i| {
            g.attributed_agent(i, AgentKind::Operator)
                .and_then(|a| a.attrs.name.as_deref())
                .is_some_and(|name| if ids.is_empty() { name != ENGINEERING_WORKSTATION } else { ids.iter().any(|x| x == name) })
        }),
    }
}

/// Every command of `command_value` to the actuator whose lineage does not
/// satisfy the permit.
pub fn check_guard(g: &ProvGraph, p: &Policy, t: &Topology) -> Result<Vec<PolicyMatch>, PolicyError> {
    let PolicyKind::Guard {
        actuator,
        command_value,
        permit,
    } = &p.kind
    else {
        return Err(wrong_kind(p, "guard"));
    };
    if let Some(s) = permit.sensors().into_iter().find(|s| t.sensor(s).is_none()) {
        return Err(PolicyError::new(&p.id, format!("permit references undeclared sensor {s:?}")));
    }
    let mut out = Vec::new();
    for &c in g.command_indices(actuator) {
        if !value(g, c).is_some_and(|v| v.loosely_equals(command_value)) {
            continue;
        }
        let lineage = g.lineage_indices(c);
        if permits(g, &lineage, permit) {
            continue;
        }
        let agents = lineage.iter().flat_map(|&i| {
            g.out_edges(i)
                .iter()
                .filter(|(j, _)| g.node_at(*j).kind.is_agent())
                .map(|(j, _)| *j)
        });
        let start = lineage.iter().map(|&i| tick(g, i)).min().unwrap_or(0).saturating_sub(1);
        let sensors: BTreeSet<&str> = lineage
            .iter()
            .filter(|&&i| g.is_reading(i))
            .filter_map(|&i| g.node_at(i).attrs.device.as_deref())
            .collect();
        let mut detail = Map::new();
        detail.insert("actuator".into(), json!(actuator));
        detail.insert("lineage_sensors".into(), json!(sensors));
        out.push(PolicyMatch {
            policy_id: p.id.clone(),
            tick_span: [start, tick(g, c) + 1],
            witness: Witness {
                nodes: ids(g, lineage.iter().copied().chain(agents)),
                focus: ids(g, [c]),
                impact: Vec::new(),
                values: value(g, c).cloned().into_iter().collect(),
                detail,
            },
        });
    }
    Ok(out)
}

/// Ticks a predicate looks back from the reading it tests.
fn lookback(pred: &Predicate) -> u64 {
    match pred {
        Predicate::Becomes(_) => 1,
        Predicate::Rise { over_ticks, .. } => *over_ticks,
        _ => 0,
    }
}

/// Evaluates `pred` on reading `i` of `sensor`, including its temporal forms.
fn temporal_holds(g: &ProvGraph, sensor: &str, i: usize, pred: &Predicate) -> bool {
    let Some(v) = value(g, i) else { return false };
    let t = tick(g, i);
    match pred {
        Predicate::Becomes(x) => {
            v.loosely_equals(x)
                && (t == 0
                    || !readings_between(g, sensor, t - 1, t)
                        .iter()
                        .any(|&j| value(g, j).is_some_and(|w| w.loosely_equals(x))))
        }
        Predicate::Rise { threshold, over_ticks } => {
            let Some(then) = t.checked_sub(*over_ticks) else { return false };
            let Some(&j) = readings_between(g, sensor, then, then + 1).last() else { return false };
            match (v.as_f64(), value(g, j).and_then(SignalValue::as_f64)) {
                (Some(now), Some(before)) => now - before >= *threshold,
                _ => false,
            }
        }
        other => other.holds(v),
    }
}

/// Each trigger reading with no corroborating reading within
/// `±window_ticks` of it.
pub fn check_correlation(g: &ProvGraph, p: &Policy) -> Result<Vec<PolicyMatch>, PolicyError> {
    let PolicyKind::Correlation {
        trigger_sensor,
        trigger_predicate,
        corroborating_sensor,
        corroborating_predicate,
        window_ticks: w,
    } = &p.kind
    else {
        return Err(wrong_kind(p, "correlation"));
    };
    let mut out = Vec::new();
    for &r in g.reading_indices(trigger_sensor) {
        if !temporal_holds(g, trigger_sensor, r, trigger_predicate) {
            continue;
        }
        let t = tick(g, r);
        let lo = t.saturating_sub(*w);
        let hi = t.saturating_add(*w).saturating_add(1);
        let candidates = readings_between(g, corroborating_sensor, lo, hi);
        if candidates
            .iter()
            .any(|&c| temporal_holds(g, corroborating_sensor, c, corroborating_predicate))
        {
            continue;
        }
        let start = t
            .saturating_sub(lookback(trigger_predicate))
            .min(lo.saturating_sub(lookback(corroborating_predicate)));
        let context = readings_between(g, corroborating_sensor, start, hi);
        let trigger_back = readings_between(g, trigger_sensor, t.saturating_sub(lookback(trigger_predicate)), t);
        let impact = g.derived_descendants(r).into_iter().filter(|&i| g.is_command(i));
        let mut detail = Map::new();
        detail.insert("trigger_sensor".into(), json!(trigger_sensor));
        detail.insert("trigger_tick".into(), json!(t));
        detail.insert("corroborating_sensor".into(), json!(corroborating_sensor));
        detail.insert("window_ticks".into(), json!(w));
        out.push(PolicyMatch {
            policy_id: p.id.clone(),
            tick_span: [start, hi],
            witness: Witness {
                nodes: ids(g, [r].into_iter().chain(trigger_back.iter().copied()).chain(context.iter().copied())),
                focus: ids(g, [r]),
                impact: ids(g, impact),
                values: value(g, r).cloned().into_iter().collect(),
                detail,
            },
        });
    }
    Ok(out)
}

/// Each reading of the sensor attributed to an attachment point other
/// than the expected one.
pub fn check_source_binding(g: &ProvGraph, p: &Policy) -> Result<Vec<PolicyMatch>, PolicyError> {
    let PolicyKind::SourceBinding {
        sensor,
        expected_origin_point,
    } = &p.kind
    else {
        return Err(wrong_kind(p, "source_binding"));
    };
    let mut out = Vec::new();
    for &r in g.reading_indices(sensor) {
        let seen = origin(g, r);
        if seen == Some(expected_origin_point.as_str()) {
            continue;
        }
        let agent = g
            .out_edges(r)
            .iter()
            .map(|(j, _)| *j)
            .find(|&j| g.node_at(j).kind == crate::provenance::NodeKind::Agent(AgentKind::OriginPoint));
        let impact = g.derived_descendants(r).into_iter().filter(|&i| g.is_command(i));
        let t = tick(g, r);
        let mut detail = Map::new();
        detail.insert("sensor".into(), json!(sensor));
        detail.insert("origin".into(), json!(seen));
        detail.insert("expected_origin_point".into(), json!(expected_origin_point));
        out.push(PolicyMatch {
            policy_id: p.id.clone(),
            tick_span: [t, t + 1],
            witness: Witness {
                nodes: ids(g, [r].into_iter().chain(agent)),
                focus: ids(g, [r]),
                impact: ids(g, impact),
                values: value(g, r).cloned().into_iter().collect(),
                detail,
            },
        });
    }
    Ok(out)
}

/// Runs the check matching the policy's kind.
pub fn evaluate(g: &ProvGraph, p: &Policy, t: &Topology) -> Result<Vec<PolicyMatch>, PolicyError> {
    match &p.kind {
        PolicyKind::DuplicateActuation { .. } => check_duplicate_actuation(g, p),
        PolicyKind::ConflictingCommands { .. } => classify_conflict(g, p),
        PolicyKind::RangeExcursion { .. } => check_range_excursions(g, p, t),
        PolicyKind::FeatureContention { .. } => check_feature_contention(g, p),
        PolicyKind::Guard { .. } => check_guard(g, p, t),
        PolicyKind::Correlation { .. } => check_correlation(g, p),
        PolicyKind::SourceBinding { .. } => check_source_binding(g, p),
    }
}
