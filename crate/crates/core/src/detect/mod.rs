//! Policy evaluation over a graph, turned into violations with causal
//! explanations and answers to the administrator questions:
//!
//! * q1: has an actuator been actuated more than once at the same time?
//! * q2: were those commands the same or different?
//! * q3: what are the reasons behind conflicting actions?
//! * q4: which sensors influenced the conflicting commands?
//! * q5: has a sensor gone beyond its normal range, how often and how long?
//! * q6: were there more than the allowed actions on one environment feature?

mod narrative;
mod text;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use narrative::{command_chain, narrate, NarrativeStep};
pub use text::render_text;

use crate::model::{SignalValue, Topology};
use crate::policy::{evaluate, validate_policy, Policy, PolicyError, PolicyKind, PolicyMatch, Severity, Witness};
use crate::provenance::{to_dot, NodeId, ProvEdge, ProvGraph};

pub const REPORT_SCHEMA: &str = "plcprov-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<ProvEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub id: String,
    pub policy_id: String,
    pub kind: String,
    pub severity: Severity,
    pub tick_span: [u64; 2],
    pub witness: Witness,
    /// Ancestor closure of the witness and impact nodes.
    pub explanation: Explanation,
    pub narrative: Vec<NarrativeStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateGroup {
    pub policy_id: String,
    pub actuator: String,
    pub tick_span: [u64; 2],
    pub commands: Vec<NodeId>,
    pub values: Vec<SignalValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub actuator: String,
    pub tick_span: [u64; 2],
    /// `same` or `different`.
    pub classification: String,
    pub values: Vec<SignalValue>,
    pub commands: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reason {
    pub command: NodeId,
    pub actuator: String,
    pub value: Option<SignalValue>,
    pub narrative: Vec<NarrativeStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    pub command: NodeId,
    pub actuator: String,
    pub value: Option<SignalValue>,
    pub sensors: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeSummary {
    pub sensor: String,
    pub occurrences: usize,
    pub durations: Vec<u64>,
    pub total_duration: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentionSummary {
    pub feature: String,
    pub ticks: Vec<u64>,
    pub max_actuators: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuestionAnswers {
    pub q1_duplicates: Vec<DuplicateGroup>,
    pub q2_same_or_different: Vec<Classification>,
    pub q3_reasons: Vec<Reason>,
    pub q4_influencing_sensors: Vec<Influence>,
    pub q5_range_excursions: Vec<RangeSummary>,
    pub q6_contention: Vec<ContentionSummary>,
}

impl QuestionAnswers {
    /// JSON answer for one question id `q1`..`q6`.
    pub fn answer(&self, q: &str) -> Option<serde_json::Value> {
        let v = match q {
            "q1" => serde_json::to_value(&self.q1_duplicates),
            "q2" => serde_json::to_value(&self.q2_same_or_different),
            "q3" => serde_json::to_value(&self.q3_reasons),
            "q4" => serde_json::to_value(&self.q4_influencing_sensors),
            "q5" => serde_json::to_value(&self.q5_range_excursions),
            "q6" => serde_json::to_value(&self.q6_contention),
            _ => return None,
        };
        v.ok()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub violations: usize,
    pub matches: usize,
    pub merged: usize,
    pub by_policy: BTreeMap<String, usize>,
    pub by_severity: BTreeMap<Severity, usize>,
    pub range_occurrences: usize,
    pub range_total_duration: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub violations: Vec<Violation>,
    pub question_answers: QuestionAnswers,
    pub counts: Counts,
    pub config_errors: Vec<PolicyError>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn violation(&self, id: &str) -> Option<&Violation> {
        self.violations.iter().find(|v| v.id == id)
    }
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("no violation {0:?} in the report")]
    NotFound(String),
}

fn indices(g: &ProvGraph, ids: &[NodeId]) -> Vec<usize> {
    ids.iter().filter_map(|id| g.index_of(id)).collect()
}

fn explanation(g: &ProvGraph, w: &Witness) -> BTreeSet<usize> {
    let mut all = BTreeSet::new();
    for i in indices(g, &w.nodes).into_iter().chain(indices(g, &w.impact)) {
        if !all.contains(&i) {
            all.extend(g.ancestor_indices(i, None));
        }
    }
    all
}

fn steps(g: &ProvGraph, idx: &[usize]) -> Vec<NarrativeStep> {
    idx.iter().map(|&i| narrative::describe(g, i)).collect()
}

fn make_violation(g: &ProvGraph, policy: &Policy, k: usize, m: PolicyMatch) -> Violation {
    let expl = explanation(g, &m.witness);
    let sub = g.induced(&expl);
    let chain = narrate(g, &indices(g, &m.witness.focus), &indices(g, &m.witness.impact));
    Violation {
        id: format!("{}/{k}", policy.id),
        policy_id: policy.id.clone(),
        kind: policy.kind.name().to_string(),
        severity: policy.severity,
        tick_span: m.tick_span,
        witness: m.witness,
        explanation: Explanation {
            nodes: sub.nodes().iter().map(|n| n.id.clone()).collect(),
            edges: sub.edges().to_vec(),
        },
        narrative: steps(g, &chain),
    }
}

fn span_key(m: &PolicyMatch) -> ([u64; 2], &[NodeId]) {
    (m.tick_span, &m.witness.nodes)
}

/// Evaluates every policy on a micro graph and assembles the report.
///
/// Policies that fail the topology cross-check, or whose evaluation fails,
/// are skipped and listed under `config_errors`. Matches are only merged
/// when policy and witness are identical.
pub fn detect(g: &ProvGraph, policies: &[Policy], topology: &Topology) -> Report {
    let mut config_errors = Vec::new();
    let mut counts = Counts::default();
    let mut violations = Vec::new();
    let mut dup_groups: Vec<(&Policy, PolicyMatch)> = Vec::new();

    let mut order: Vec<(usize, &Policy)> = policies.iter().enumerate().collect();
    order.sort_by(|a, b| a.1.id.cmp(&b.1.id).then(a.0.cmp(&b.0)));
    let mut seen_ids = BTreeSet::new();
    for (i, p) in order {
        if !seen_ids.insert(p.id.as_str()) {
            config_errors.push(PolicyError::new(format!("policies[{i}] ({})", p.id), "duplicate policy id"));
            continue;
        }
        let errors = validate_policy(p, i, topology);
        if !errors.is_empty() {
            config_errors.extend(errors);
            continue;
        }
        let mut matches = match evaluate(g, p, topology) {
            Ok(m) => m,
            Err(e) => {
                config_errors.push(e);
                continue;
            }
        };
        counts.matches += matches.len();
        matches.sort_by(|a, b| span_key(a).cmp(&span_key(b)));
        let before = matches.len();
        matches.dedup_by(|a, b| a.witness == b.witness);
        if matches.len() < before {
            log::info!("policy {}: merged {} matches with identical witnesses", p.id, before - matches.len());
            counts.merged += before - matches.len();
        }
        for (k, m) in matches.into_iter().enumerate() {
            if matches!(p.kind, PolicyKind::DuplicateActuation { .. } | PolicyKind::ConflictingCommands { .. }) {
                dup_groups.push((p, m.clone()));
            }
            violations.push(make_violation(g, p, k + 1, m));
        }
    }

    let question_answers = answers(g, &violations, &dup_groups);
    counts.violations = violations.len();
    for v in &violations {
        *counts.by_policy.entry(v.policy_id.clone()).or_default() += 1;
        *counts.by_severity.entry(v.severity).or_default() += 1;
    }
    counts.range_occurrences = question_answers.q5_range_excursions.iter().map(|r| r.occurrences).sum();
    counts.range_total_duration = question_answers.q5_range_excursions.iter().map(|r| r.total_duration).sum();
    config_errors.sort();

    Report {
        schema: REPORT_SCHEMA.to_string(),
        scenario: g.meta.scenario.clone(),
        scenario_hash: g.meta.scenario_hash.clone(),
        seed: g.meta.seed,
        violations,
        question_answers,
        counts,
        config_errors,
    }
}

fn detail_str<'a>(w: &'a Witness, key: &str) -> &'a str {
    w.detail.get(key).and_then(|v| v.as_str()).unwrap_or("")
}

fn answers(g: &ProvGraph, violations: &[Violation], dup_groups: &[(&Policy, PolicyMatch)]) -> QuestionAnswers {
    let mut qa = QuestionAnswers::default();

    let mut classified: BTreeMap<(String, [u64; 2]), Classification> = BTreeMap::new();
    for (p, m) in dup_groups {
        let actuator = detail_str(&m.witness, "actuator").to_string();
        if matches!(p.kind, PolicyKind::DuplicateActuation { .. }) {
            qa.q1_duplicates.push(DuplicateGroup {
                policy_id: p.id.clone(),
                actuator: actuator.clone(),
                tick_span: m.tick_span,
                commands: m.witness.focus.clone(),
                values: m.witness.values.clone(),
            });
        }
        let mut values: Vec<SignalValue> = Vec::new();
        for v in &m.witness.values {
            if !values.iter().any(|x| x.loosely_equals(v)) {
                values.push(v.clone());
            }
        }
        values.sort_by(SignalValue::canonical_cmp);
        let entry = classified.entry((actuator.clone(), m.tick_span)).or_insert_with(|| Classification {
            actuator,
            tick_span: m.tick_span,
            classification: String::new(),
            values: Vec::new(),
            commands: Vec::new(),
        });
        for v in values {
            if !entry.values.iter().any(|x| x.loosely_equals(&v)) {
                entry.values.push(v);
            }
        }
        entry.values.sort_by(SignalValue::canonical_cmp);
        for c in &m.witness.focus {
            if !entry.commands.contains(c) {
                entry.commands.push(c.clone());
            }
        }
        entry.commands.sort_by_key(|c| g.index_of(c));
        entry.classification = if entry.values.len() >= 2 { "different" } else { "same" }.to_string();
    }

    let mut conflicting: BTreeSet<usize> = BTreeSet::new();
    for c in classified.values() {
        if c.classification == "different" {
            conflicting.extend(indices(g, &c.commands));
        }
    }
    qa.q2_same_or_different = classified.into_values().collect();
    for &c in &conflicting {
        let n = g.node_at(c);
        let actuator = n.attrs.device.clone().unwrap_or_default();
        qa.q3_reasons.push(Reason {
            command: n.id.clone(),
            actuator: actuator.clone(),
            value: n.attrs.value.clone(),
            narrative: steps(g, &command_chain(g, c)),
        });
        qa.q4_influencing_sensors.push(Influence {
            command: n.id.clone(),
            actuator,
            value: n.attrs.value.clone(),
            sensors: g.influencing_sensors(&n.id).unwrap_or_default(),
        });
    }

    let mut ranges: BTreeMap<String, RangeSummary> = BTreeMap::new();
    let mut contention: BTreeMap<String, ContentionSummary> = BTreeMap::new();
    for v in violations {
        match v.kind.as_str() {
            "range_excursion" => {
                let sensor = detail_str(&v.witness, "sensor").to_string();
                let d = v.witness.detail.get("duration").and_then(|d| d.as_u64()).unwrap_or(0);
                let r = ranges.entry(sensor.clone()).or_insert_with(|| RangeSummary {
                    sensor,
                    occurrences: 0,
                    durations: Vec::new(),
                    total_duration: 0,
                });
                r.occurrences += 1;
                r.durations.push(d);
                r.total_duration += d;
            }
            "feature_contention" => {
                let feature = detail_str(&v.witness, "feature").to_string();
                let n = v.witness.detail.get("count").and_then(|d| d.as_u64()).unwrap_or(0) as usize;
                let c = contention.entry(feature.clone()).or_insert_with(|| ContentionSummary {
                    feature,
                    ticks: Vec::new(),
                    max_actuators: 0,
                });
                if !c.ticks.contains(&v.tick_span[0]) {
                    c.ticks.push(v.tick_span[0]);
                }
                c.ticks.sort_unstable();
                c.max_actuators = c.max_actuators.max(n);
            }
            _ => {}
        }
    }
    qa.q5_range_excursions = ranges.into_values().collect();
    qa.q6_contention = contention.into_values().collect();
    qa
}

/// Policies answering the six questions with default parameters: duplicate
/// and conflict checks per actuator over one tick, range checks for every
/// sensor with a normal range, contention above two actions per feature.
pub fn question_policies(topology: &Topology) -> Vec<Policy> {
    let mut out = Vec::new();
    let mk = |id: String, kind: PolicyKind| Policy {
        id,
        severity: Severity::Info,
        description: None,
        kind,
    };
    for a in &topology.actuators {
        out.push(mk(
            format!("q1_duplicate_{}", a.id),
            PolicyKind::DuplicateActuation {
                actuator: a.id.clone(),
                within_ticks: 1,
            },
        ));
        out.push(mk(
            format!("q2_conflict_{}", a.id),
            PolicyKind::ConflictingCommands {
                actuator: a.id.clone(),
                within_ticks: 1,
            },
        ));
    }
    for s in topology.sensors.iter().filter(|s| s.normal_range.is_some()) {
        out.push(mk(
            format!("q5_range_{}", s.id),
            PolicyKind::RangeExcursion {
                sensor: s.id.clone(),
                min_duration_ticks: 1,
            },
        ));
    }
    for f in &topology.features {
        out.push(mk(
            format!("q6_contention_{}", f.id),
            PolicyKind::FeatureContention {
                feature: f.id.clone(),
                max_concurrent: 2,
            },
        ));
    }
    out
}

/// Narrative and highlighted Dot rendering of one violation.
pub fn explain(report: &Report, violation_id: &str, g: &ProvGraph) -> Result<(Vec<NarrativeStep>, String), DetectError> {
    let v = report
        .violation(violation_id)
        .ok_or_else(|| DetectError::NotFound(violation_id.to_string()))?;
    let sub = g.induced_by_ids(&v.explanation.nodes);
    let highlight: BTreeSet<NodeId> = v.witness.nodes.iter().chain(&v.witness.impact).cloned().collect();
    Ok((v.narrative.clone(), to_dot(&sub, &highlight)))
}
