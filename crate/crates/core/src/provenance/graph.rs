use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ProvError;
use crate::model::SignalValue;

pub type NodeId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Reading,
    VariableState,
    Command,
    Message,
    /// Macro level: a feature's readings between two actuations.
    FeatureInterval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityKind {
    Scan,
    Actuation,
    /// Macro level: consecutive actuations of one actuator.
    ActuatorEpisode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Plc,
    SensorDevice,
    Operator,
    OriginPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "class", content = "type", rename_all = "snake_case")]
pub enum NodeKind {
    Entity(EntityKind),
    Activity(ActivityKind),
    Agent(AgentKind),
}

impl NodeKind {
    pub fn is_entity(&self) -> bool {
        matches!(self, NodeKind::Entity(_))
    }

    pub fn is_activity(&self) -> bool {
        matches!(self, NodeKind::Activity(_))
    }

    pub fn is_agent(&self) -> bool {
        matches!(self, NodeKind::Agent(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            NodeKind::Entity(EntityKind::Reading) => "reading",
            NodeKind::Entity(EntityKind::VariableState) => "variable_state",
            NodeKind::Entity(EntityKind::Command) => "command",
            NodeKind::Entity(EntityKind::Message) => "message",
            NodeKind::Entity(EntityKind::FeatureInterval) => "feature_interval",
            NodeKind::Activity(ActivityKind::Scan) => "scan",
            NodeKind::Activity(ActivityKind::Actuation) => "actuation",
            NodeKind::Activity(ActivityKind::ActuatorEpisode) => "actuator_episode",
            NodeKind::Agent(AgentKind::Plc) => "plc",
            NodeKind::Agent(AgentKind::SensorDevice) => "sensor_device",
            NodeKind::Agent(AgentKind::Operator) => "operator",
            NodeKind::Agent(AgentKind::OriginPoint) => "origin_point",
        }
    }
}

/// PROV-DM core relations. Every edge points from the dependent node to
/// the node it depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Relation {
    Used,
    WasGeneratedBy,
    WasAssociatedWith,
    WasAttributedTo,
    WasDerivedFrom,
    WasInformedBy,
}

impl Relation {
    /// Endpoint typing: `(source class, destination class)` this relation allows.
    pub fn admits(&self, src: &NodeKind, dst: &NodeKind) -> bool {
        match self {
            Relation::Used => src.is_activity() && dst.is_entity(),
            Relation::WasGeneratedBy => src.is_entity() && dst.is_activity(),
            Relation::WasAssociatedWith => src.is_activity() && dst.is_agent(),
            Relation::WasAttributedTo => src.is_entity() && dst.is_agent(),
            Relation::WasDerivedFrom => src.is_entity() && dst.is_entity(),
            Relation::WasInformedBy => src.is_activity() && dst.is_activity(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Relation::Used => "used",
            Relation::WasGeneratedBy => "wasGeneratedBy",
            Relation::WasAssociatedWith => "wasAssociatedWith",
            Relation::WasAttributedTo => "wasAttributedTo",
            Relation::WasDerivedFrom => "wasDerivedFrom",
            Relation::WasInformedBy => "wasInformedBy",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeAttrs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tick: Option<u64>,
    /// Exclusive end tick of macro nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plc: Option<String>,
    /// Variable name, channel name or agent id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Sensor id of readings, actuator id of commands and actuations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub affects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<SignalValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvNode {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default)]
    pub attrs: NodeAttrs,
}

impl ProvNode {
    pub fn tick(&self) -> Option<u64> {
        self.attrs.tick
    }

    pub fn is(&self, kind: NodeKind) -> bool {
        self.kind == kind
    }

    /// `(tick, seq)` of nodes built from a trace record.
    pub fn record_key(&self) -> Option<(u64, u32)> {
        Some((self.attrs.tick?, self.attrs.seq?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub rel: Relation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Micro,
    Macro,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphMeta {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
}

/// Immutable provenance DAG with lookup indexes.
#[derive(Debug, Clone)]
pub struct ProvGraph {
    pub level: Level,
    pub meta: GraphMeta,
    nodes: Vec<ProvNode>,
    edges: Vec<ProvEdge>,
    /// Macro node id -> contracted micro node ids.
    members: BTreeMap<NodeId, Vec<NodeId>>,
    index: HashMap<NodeId, usize>,
    out: Vec<Vec<(usize, Relation)>>,
    inc: Vec<Vec<(usize, Relation)>>,
    commands_by_actuator: BTreeMap<String, Vec<usize>>,
    readings_by_sensor: BTreeMap<String, Vec<usize>>,
    actuations_by_tick: BTreeMap<u64, Vec<usize>>,
}

impl PartialEq for ProvGraph {
    fn eq(&self, other: &Self) -> bool {
        self.level == other.level
            && self.meta == other.meta
            && self.nodes == other.nodes
            && self.edges == other.edges
            && self.members == other.members
    }
}

fn by_record(nodes: &[ProvNode], list: &mut [usize]) {
    list.sort_by_key(|&i| (nodes[i].attrs.tick, nodes[i].attrs.seq, i));
}

impl ProvGraph {
    /// Assembles a graph from parts, checking id uniqueness and that every
    /// edge endpoint exists. Duplicate edges are dropped.
    pub fn from_parts(
        level: Level,
        meta: GraphMeta,
        nodes: Vec<ProvNode>,
        edges: Vec<ProvEdge>,
        members: BTreeMap<NodeId, Vec<NodeId>>,
    ) -> Result<Self, ProvError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(ProvError::IdCollision(n.id.clone()));
            }
        }
        let mut out = vec![Vec::new(); nodes.len()];
        let mut inc = vec![Vec::new(); nodes.len()];
        let mut seen = std::collections::HashSet::new();
        let mut kept = Vec::with_capacity(edges.len());
        for e in edges {
            let s = *index.get(&e.src).ok_or_else(|| ProvError::NotFound(e.src.clone()))?;
            let d = *index.get(&e.dst).ok_or_else(|| ProvError::NotFound(e.dst.clone()))?;
            if !seen.insert((s, d, e.rel)) {
                continue;
            }
            out[s].push((d, e.rel));
            inc[d].push((s, e.rel));
            kept.push(e);
        }
        let mut commands_by_actuator: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut readings_by_sensor: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut actuations_by_tick: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            match (n.kind, &n.attrs.device) {
                (NodeKind::Entity(EntityKind::Command), Some(a)) => commands_by_actuator.entry(a.clone()).or_default().push(i),
                (NodeKind::Entity(EntityKind::Reading), Some(s)) => readings_by_sensor.entry(s.clone()).or_default().push(i),
                (NodeKind::Activity(ActivityKind::Actuation), Some(_)) => {
                    if let Some(t) = n.attrs.tick {
                        actuations_by_tick.entry(t).or_default().push(i)
                    }
                }
                _ => {}
            }
        }
        for list in commands_by_actuator.values_mut().chain(readings_by_sensor.values_mut()) {
            by_record(&nodes, list);
        }
        Ok(Self {
            level,
            meta,
            nodes,
            edges: kept,
            members,
            index,
            out,
            inc,
            commands_by_actuator,
            readings_by_sensor,
            actuations_by_tick,
        })
    }

    pub fn nodes(&self) -> &[ProvNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[ProvEdge] {
        &self.edges
    }

    pub fn members(&self) -> &BTreeMap<NodeId, Vec<NodeId>> {
        &self.members
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn node(&self, id: &str) -> Option<&ProvNode> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn node_at(&self, i: usize) -> &ProvNode {
        &self.nodes[i]
    }

    /// Outgoing `(target, relation)` pairs: what node `i` depends on.
    pub fn out_edges(&self, i: usize) -> &[(usize, Relation)] {
        &self.out[i]
    }

    /// Incoming `(source, relation)` pairs: what depends on node `i`.
    pub fn in_edges(&self, i: usize) -> &[(usize, Relation)] {
        &self.inc[i]
    }

    fn require(&self, id: &str) -> Result<usize, ProvError> {
        self.index_of(id).ok_or_else(|| ProvError::NotFound(id.to_string()))
    }

    /// Indices reachable from `start` along dependency edges, `start`
    /// included, limited to `max_depth` hops when given.
    pub fn ancestor_indices(&self, start: usize, max_depth: Option<usize>) -> BTreeSet<usize> {
        self.reach(start, max_depth, |_| true)
    }

    /// Entity lineage: `start` plus everything reachable over
    /// `wasDerivedFrom` alone.
    pub fn lineage_indices(&self, start: usize) -> BTreeSet<usize> {
        self.reach(start, None, |r| r == Relation::WasDerivedFrom)
    }

    fn reach(&self, start: usize, max_depth: Option<usize>, follow: impl Fn(Relation) -> bool) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([(start, 0usize)]);
        while let Some((i, depth)) = queue.pop_front() {
            if max_depth.is_some_and(|m| depth >= m) {
                continue;
            }
            for &(j, rel) in &self.out[i] {
                if follow(rel) && seen.insert(j) {
                    queue.push_back((j, depth + 1));
                }
            }
        }
        seen
    }

    /// Entities derived, directly or transitively, from node `start`.
    pub fn derived_descendants(&self, start: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for &(j, rel) in &self.inc[i] {
                if rel == Relation::WasDerivedFrom && seen.insert(j) {
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    /// Ancestor subgraph of a node: the node, everything it transitively
    /// depends on, and the edges among them.
    pub fn ancestors(&self, id: &str, max_depth: Option<usize>) -> Result<ProvGraph, ProvError> {
        let i = self.require(id)?;
        Ok(self.induced(&self.ancestor_indices(i, max_depth)))
    }

    /// Induced subgraph over a set of node indices. Node and edge order
    /// follow the parent graph.
    pub fn induced(&self, keep: &BTreeSet<usize>) -> ProvGraph {
        let nodes: Vec<ProvNode> = keep.iter().map(|&i| self.nodes[i].clone()).collect();
        let edges: Vec<ProvEdge> = self
            .edges
            .iter()
            .filter(|e| {
                let s = self.index[&e.src];
                let d = self.index[&e.dst];
                keep.contains(&s) && keep.contains(&d)
            })
            .cloned()
            .collect();
        let members = self
            .members
            .iter()
            .filter(|(k, _)| self.index_of(k).is_some_and(|i| keep.contains(&i)))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        ProvGraph::from_parts(self.level, self.meta.clone(), nodes, edges, members).expect("subset of a valid graph")
    }

    pub fn induced_by_ids<'a>(&self, ids: impl IntoIterator<Item = &'a NodeId>) -> ProvGraph {
        let keep = ids.into_iter().filter_map(|id| self.index_of(id)).collect();
        self.induced(&keep)
    }

    pub fn is_command(&self, i: usize) -> bool {
        self.nodes[i].is(NodeKind::Entity(EntityKind::Command))
    }

    pub fn is_reading(&self, i: usize) -> bool {
        self.nodes[i].is(NodeKind::Entity(EntityKind::Reading))
    }

    /// Command node indices for an actuator ordered by `(tick, seq)`.
    pub fn command_indices(&self, actuator: &str) -> &[usize] {
        self.commands_by_actuator.get(actuator).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Reading node indices for a sensor ordered by `(tick, seq)`.
    pub fn reading_indices(&self, sensor: &str) -> &[usize] {
        self.readings_by_sensor.get(sensor).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn actuators(&self) -> impl Iterator<Item = &str> {
        self.commands_by_actuator.keys().map(String::as_str)
    }

    pub fn sensors(&self) -> impl Iterator<Item = &str> {
        self.readings_by_sensor.keys().map(String::as_str)
    }

    pub fn actuations_by_tick(&self) -> &BTreeMap<u64, Vec<usize>> {
        &self.actuations_by_tick
    }

    /// Commands for `actuator` with `t0 <= tick < t1`, ordered by `(tick, seq)`.
    pub fn commands_at(&self, actuator: &str, t0: u64, t1: u64) -> Result<Vec<&ProvNode>, ProvError> {
        if t0 >= t1 {
            return Err(ProvError::EmptyWindow { t0, t1 });
        }
        let known = self.commands_by_actuator.contains_key(actuator)
            || self
                .nodes
                .iter()
                .any(|n| n.is(NodeKind::Activity(ActivityKind::Actuation)) && n.attrs.device.as_deref() == Some(actuator));
        if !known {
            return Err(ProvError::NotFound(actuator.to_string()));
        }
        Ok(self
            .command_indices(actuator)
            .iter()
            .map(|&i| &self.nodes[i])
            .filter(|n| n.attrs.tick.is_some_and(|t| t0 <= t && t < t1))
            .collect())
    }

    /// Sensors whose readings a command was derived from, transitively.
    pub fn influencing_sensors(&self, command_id: &str) -> Result<BTreeSet<String>, ProvError> {
        let i = self.require(command_id)?;
        if !self.is_command(i) {
            return Err(ProvError::NotACommand(command_id.to_string()));
        }
        Ok(self
            .lineage_indices(i)
            .into_iter()
            .filter(|&j| self.is_reading(j))
            .filter_map(|j| self.nodes[j].attrs.device.clone())
            .collect())
    }

    /// Agent attached to an entity over `wasAttributedTo`, by agent kind.
    pub fn attributed_agent(&self, i: usize, kind: AgentKind) -> Option<&ProvNode> {
        self.out[i]
            .iter()
            .filter(|(_, r)| *r == Relation::WasAttributedTo)
            .map(|(j, _)| &self.nodes[*j])
            .find(|n| n.kind == NodeKind::Agent(kind))
    }

    /// Kahn's algorithm; `None` when the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut pending: Vec<usize> = self.out.iter().map(Vec::len).collect();
        let mut ready: VecDeque<usize> = (0..self.nodes.len()).filter(|&i| pending[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(i) = ready.pop_front() {
            order.push(i);
            for &(j, _) in &self.inc[i] {
                pending[j] -= 1;
                if pending[j] == 0 {
                    ready.push_back(j);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Edges violating the endpoint typing table.
    pub fn mistyped_edges(&self) -> Vec<&ProvEdge> {
        self.edges
            .iter()
            .filter(|e| {
                let s = &self.nodes[self.index[&e.src]].kind;
                let d = &self.nodes[self.index[&e.dst]].kind;
                !e.rel.admits(s, d)
            })
            .collect()
    }
}
