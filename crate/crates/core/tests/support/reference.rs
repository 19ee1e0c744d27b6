//! Naive provenance construction straight from a trace, by brute-force
//! lookups instead of incremental state. Nodes are keyed structurally so the
//! result can be compared with a built graph without relying on its ids.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use plcprov_core::provenance::{
    ActivityKind, AgentKind, EntityKind, NodeKind, ProvGraph, ProvNode, Relation, ENGINEERING_WORKSTATION,
};
use plcprov_core::trace::{RecordKind, TraceLog, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Key {
    Rec(u64, u32),
    Scan(String, u64),
    Act(String, u64),
    Agent(AgentKind, String),
    Interval(String, usize),
    Episode(String, u64),
}

pub type Edge = (Key, Key, Relation);

pub struct Reference {
    pub kinds: BTreeMap<Key, NodeKind>,
    pub edges: BTreeSet<Edge>,
    pub records: BTreeMap<(u64, u32), TraceRecord>,
    adj: HashMap<Key, Vec<(Key, Relation)>>,
}

fn entity_kind(k: RecordKind) -> Option<EntityKind> {
    match k {
        RecordKind::SensorReading => Some(EntityKind::Reading),
        RecordKind::VarWrite => Some(EntityKind::VariableState),
        RecordKind::ActuatorCommand => Some(EntityKind::Command),
        RecordKind::Message => Some(EntityKind::Message),
        RecordKind::Scan | RecordKind::ScanFault => None,
    }
}

fn rec_key(r: &TraceRecord) -> Key {
    Key::Rec(r.tick, r.seq)
}

fn is_write(r: &TraceRecord) -> bool {
    matches!(r.kind, RecordKind::VarWrite | RecordKind::ActuatorCommand)
}

impl Reference {
    pub fn build(log: &TraceLog) -> Reference {
        let recs = &log.records;
        let mut kinds = BTreeMap::new();
        let mut edges = BTreeSet::new();
        let agent = |kinds: &mut BTreeMap<Key, NodeKind>, kind: AgentKind, name: &str| {
            let k = Key::Agent(kind, name.to_string());
            kinds.insert(k.clone(), NodeKind::Agent(kind));
            k
        };

        let mut by_tick: BTreeMap<u64, Vec<&TraceRecord>> = BTreeMap::new();
        let mut writes: BTreeMap<(&str, &str), Vec<(u64, u32)>> = BTreeMap::new();
        for r in recs {
            by_tick.entry(r.tick).or_default().push(r);
            if is_write(r) {
                writes.entry((r.plc.as_deref().unwrap(), r.var_name().unwrap())).or_default().push((r.tick, r.seq));
            }
        }
        let at = |t: u64| by_tick.get(&t).map(Vec::as_slice).unwrap_or(&[]);
        let delivered = |t: u64, plc: &str| -> Vec<&TraceRecord> {
            if t == 0 {
                return Vec::new();
            }
            at(t - 1)
                .iter()
                .copied()
                .filter(|x| x.kind == RecordKind::Message && x.to.as_deref() == Some(plc))
                .collect()
        };

        // sources a rule output depends on
        let sources = |r: &TraceRecord| -> Vec<Key> {
            let plc = r.plc.as_deref().unwrap();
            let mut out = Vec::new();
            let Some(reads) = &r.reads else { return out };
            for v in &reads.vars {
                let same_tick = at(r.tick)
                    .iter()
                    .find(|x| x.kind == RecordKind::SensorReading && x.plc.as_deref() == Some(plc) && x.var_name() == Some(v.as_str()))
                    .map(|x| rec_key(x));
                let earlier = || {
                    writes
                        .get(&(plc, v.as_str()))
                        .and_then(|ws| ws.iter().filter(|(t, _)| *t < r.tick).max())
                        .map(|&(t, s)| Key::Rec(t, s))
                };
                out.extend(same_tick.or_else(earlier));
            }
            for ch in &reads.channels {
                out.extend(
                    delivered(r.tick, plc)
                        .into_iter()
                        .filter(|x| x.channel.as_deref() == Some(ch.as_str()))
                        .map(rec_key),
                );
            }
            out
        };

        for r in recs {
            let me = rec_key(r);
            if let Some(ek) = entity_kind(r.kind) {
                kinds.insert(me.clone(), NodeKind::Entity(ek));
            }
            let scan = || Key::Scan(r.plc.clone().unwrap(), r.tick);
            let derive = |edges: &mut BTreeSet<Edge>| {
                for src in sources(r) {
                    edges.insert((me.clone(), src.clone(), Relation::WasDerivedFrom));
                    edges.insert((scan(), src, Relation::Used));
                }
            };
            match r.kind {
                RecordKind::SensorReading => {
                    let d = agent(&mut kinds, AgentKind::SensorDevice, r.device.as_deref().unwrap());
                    let o = agent(&mut kinds, AgentKind::OriginPoint, r.origin.as_deref().unwrap());
                    edges.insert((me.clone(), d, Relation::WasAttributedTo));
                    edges.insert((me, o, Relation::WasAttributedTo));
                }
                RecordKind::Scan => {
                    let plc = r.plc.as_deref().unwrap();
                    let s = scan();
                    kinds.insert(s.clone(), NodeKind::Activity(ActivityKind::Scan));
                    let a = agent(&mut kinds, AgentKind::Plc, plc);
                    edges.insert((s.clone(), a, Relation::WasAssociatedWith));
                    for x in at(r.tick).iter().filter(|x| x.kind == RecordKind::SensorReading && x.plc.as_deref() == Some(plc)) {
                        edges.insert((s.clone(), rec_key(x), Relation::Used));
                    }
                    for m in delivered(r.tick, plc) {
                        edges.insert((s.clone(), rec_key(m), Relation::Used));
                        if m.rule.is_some() {
                            edges.insert((s.clone(), Key::Scan(m.plc.clone().unwrap(), m.tick), Relation::WasInformedBy));
                        }
                    }
                }
                RecordKind::ScanFault => {}
                RecordKind::VarWrite => {
                    edges.insert((me.clone(), scan(), Relation::WasGeneratedBy));
                    derive(&mut edges);
                }
                RecordKind::ActuatorCommand => {
                    let device = r.device.clone().unwrap();
                    if let Some(op) = &r.operator {
                        let a = agent(&mut kinds, AgentKind::Operator, op);
                        edges.insert((me.clone(), a, Relation::WasAttributedTo));
                        if let Some(o) = &r.origin {
                            let a = agent(&mut kinds, AgentKind::OriginPoint, o);
                            edges.insert((me.clone(), a, Relation::WasAttributedTo));
                        }
                    } else {
                        edges.insert((me.clone(), scan(), Relation::WasGeneratedBy));
                        derive(&mut edges);
                    }
                    let act = Key::Act(device, r.tick);
                    kinds.insert(act.clone(), NodeKind::Activity(ActivityKind::Actuation));
                    let a = agent(&mut kinds, AgentKind::Plc, r.plc.as_deref().unwrap());
                    edges.insert((act.clone(), a, Relation::WasAssociatedWith));
                    edges.insert((act, me, Relation::Used));
                }
                RecordKind::Message => {
                    let o = agent(&mut kinds, AgentKind::OriginPoint, r.origin.as_deref().unwrap());
                    edges.insert((me.clone(), o, Relation::WasAttributedTo));
                    if r.rule.is_some() {
                        edges.insert((me.clone(), scan(), Relation::WasGeneratedBy));
                        derive(&mut edges);
                    }
                }
            }
        }

        // commands nothing grounds are credited to the workstation
        let mut rev: BTreeMap<&Key, Vec<&Key>> = BTreeMap::new();
        for (s, d, _) in &edges {
            rev.entry(d).or_default().push(s);
        }
        let mut grounded: BTreeSet<&Key> = kinds
            .iter()
            .filter(|(_, k)| matches!(k, NodeKind::Entity(EntityKind::Reading) | NodeKind::Agent(AgentKind::Operator)))
            .map(|(k, _)| k)
            .collect();
        let mut queue: VecDeque<&Key> = grounded.iter().copied().collect();
        while let Some(k) = queue.pop_front() {
            for &s in rev.get(k).into_iter().flatten() {
                if grounded.insert(s) {
                    queue.push_back(s);
                }
            }
        }
        let orphans: Vec<Key> = kinds
            .iter()
            .filter(|(k, kind)| **kind == NodeKind::Entity(EntityKind::Command) && !grounded.contains(k))
            .map(|(k, _)| k.clone())
            .collect();
        drop(rev);
        if !orphans.is_empty() {
            let ws = agent(&mut kinds, AgentKind::Operator, ENGINEERING_WORKSTATION);
            for c in orphans {
                edges.insert((c, ws.clone(), Relation::WasAttributedTo));
            }
        }

        let records = recs.iter().map(|r| ((r.tick, r.seq), r.clone())).collect();
        let mut adj: HashMap<Key, Vec<(Key, Relation)>> = HashMap::new();
        for (s, d, r) in &edges {
            adj.entry(s.clone()).or_default().push((d.clone(), *r));
        }
        Reference { kinds, edges, records, adj }
    }

    pub fn record(&self, k: &Key) -> Option<&TraceRecord> {
        match k {
            Key::Rec(t, s) => self.records.get(&(*t, *s)),
            _ => None,
        }
    }

    pub fn out<'a>(&'a self, k: &'a Key) -> impl Iterator<Item = (&'a Key, Relation)> + 'a {
        self.adj.get(k).into_iter().flatten().map(|(d, r)| (d, *r))
    }

    /// `start` plus everything it was derived from, transitively.
    pub fn lineage(&self, start: &Key) -> BTreeSet<Key> {
        let mut seen = BTreeSet::from([start.clone()]);
        let mut stack = vec![start.clone()];
        while let Some(k) = stack.pop() {
            for (d, r) in self.out(&k) {
                if r == Relation::WasDerivedFrom && seen.insert(d.clone()) {
                    stack.push(d.clone());
                }
            }
        }
        seen
    }

    /// Entities derived from `start`, transitively, excluding `start`.
    pub fn descendants(&self, start: &Key) -> BTreeSet<Key> {
        let mut derived: BTreeMap<&Key, Vec<&Key>> = BTreeMap::new();
        for (s, d, r) in &self.edges {
            if *r == Relation::WasDerivedFrom {
                derived.entry(d).or_default().push(s);
            }
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(k) = stack.pop() {
            for &s in derived.get(k).into_iter().flatten() {
                if seen.insert(s.clone()) {
                    stack.push(s);
                }
            }
        }
        seen
    }

    /// Agents an entity is attributed to.
    pub fn agents_of<'a>(&'a self, k: &'a Key) -> Vec<&'a Key> {
        self.out(k).filter(|(d, _)| matches!(d, Key::Agent(..))).map(|(d, _)| d).collect()
    }

    /// Macro view: reading groups between actuations of their feature and
    /// actuation runs at consecutive ticks, edges taken to the quotient.
    pub fn contract(&self) -> (BTreeMap<Key, Key>, BTreeSet<Edge>) {
        let mut act_ticks: BTreeMap<&str, BTreeSet<u64>> = BTreeMap::new();
        let mut feature_ticks: BTreeMap<&str, BTreeSet<u64>> = BTreeMap::new();
        for r in self.records.values().filter(|r| r.kind == RecordKind::ActuatorCommand) {
            act_ticks.entry(r.device.as_deref().unwrap()).or_default().insert(r.tick);
        }
        for k in self.kinds.keys() {
            if let Key::Act(dev, t) = k {
                let first = self
                    .records
                    .values()
                    .find(|r| r.kind == RecordKind::ActuatorCommand && r.device.as_deref() == Some(dev) && r.tick == *t)
                    .unwrap();
                for f in &first.affects {
                    feature_ticks.entry(f).or_default().insert(*t);
                }
            }
        }
        let group = |k: &Key| -> Key {
            match k {
                Key::Rec(..) => {
                    let r = self.record(k).unwrap();
                    if r.kind != RecordKind::SensorReading {
                        return k.clone();
                    }
                    let f = r.feature.as_deref().unwrap();
                    let epoch = feature_ticks.get(f).map_or(0, |ts| ts.iter().filter(|&&x| x < r.tick).count());
                    Key::Interval(f.to_string(), epoch)
                }
                Key::Act(dev, t) => {
                    let ticks = &act_ticks[dev.as_str()];
                    let mut s = *t;
                    while s > 0 && ticks.contains(&(s - 1)) {
                        s -= 1;
                    }
                    Key::Episode(dev.clone(), s)
                }
                _ => k.clone(),
            }
        };
        let map: BTreeMap<Key, Key> = self.kinds.keys().map(|k| (k.clone(), group(k))).collect();
        let edges = self
            .edges
            .iter()
            .filter_map(|(s, d, r)| {
                let (a, b) = (&map[s], &map[d]);
                (a != b).then(|| (a.clone(), b.clone(), *r))
            })
            .collect();
        (map, edges)
    }
}

/// Structural key of a node of a built graph.
pub fn key_of(n: &ProvNode) -> Key {
    match n.kind {
        NodeKind::Agent(kind) => Key::Agent(kind, n.attrs.name.clone().unwrap()),
        NodeKind::Activity(ActivityKind::Scan) => Key::Scan(n.attrs.plc.clone().unwrap(), n.attrs.tick.unwrap()),
        NodeKind::Activity(ActivityKind::Actuation) => Key::Act(n.attrs.device.clone().unwrap(), n.attrs.tick.unwrap()),
        NodeKind::Activity(ActivityKind::ActuatorEpisode) => {
            Key::Episode(n.attrs.device.clone().unwrap(), n.attrs.tick.unwrap())
        }
        NodeKind::Entity(EntityKind::FeatureInterval) => {
            // identified by feature and first tick; callers translate
            Key::Interval(n.attrs.feature.clone().unwrap(), n.attrs.tick.unwrap() as usize)
        }
        NodeKind::Entity(_) => {
            let (t, s) = n.record_key().unwrap();
            Key::Rec(t, s)
        }
    }
}

pub struct Keyed {
    pub keys: Vec<Key>,
    pub by_id: BTreeMap<String, Key>,
}

pub fn keyed(g: &ProvGraph) -> Keyed {
    let keys: Vec<Key> = g.nodes().iter().map(key_of).collect();
    let by_id = g.nodes().iter().zip(&keys).map(|(n, k)| (n.id.clone(), k.clone())).collect();
    Keyed { keys, by_id }
}

pub fn graph_edges(g: &ProvGraph, k: &Keyed) -> BTreeSet<Edge> {
    g.edges().iter().map(|e| (k.by_id[&e.src].clone(), k.by_id[&e.dst].clone(), e.rel)).collect()
}
