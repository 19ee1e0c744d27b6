use std::collections::{BTreeMap, HashMap, HashSet};

use super::graph::{ActivityKind, AgentKind, EntityKind, GraphMeta, Level, NodeAttrs, NodeKind, ProvEdge, ProvGraph, ProvNode, Relation};
use super::macro_level::contract;
use super::ProvError;
use crate::hashing::short_id;
use crate::logic::ReadSet;
use crate::trace::{Phase, RecordKind, TraceLog, TraceRecord};

/// Operator agent credited with commands that no reading or operator
/// action explains, i.e. behaviour fixed by the PLC program itself.
pub const ENGINEERING_WORKSTATION: &str = "engineering-workstation";

fn node_id(label: &str, parts: &[&str]) -> String {
    let mut all = vec![label];
    all.extend_from_slice(parts);
    format!("{label}:{}", short_id(&all))
}

#[derive(Default)]
struct Builder {
    nodes: Vec<ProvNode>,
    edges: Vec<(usize, usize, Relation)>,
    edge_set: HashSet<(usize, usize, Relation)>,
    out: Vec<Vec<usize>>,
    ids: HashMap<String, usize>,
    agents: HashMap<(AgentKind, String), usize>,
}

impl Builder {
    fn add(&mut self, id: String, kind: NodeKind, attrs: NodeAttrs) -> Result<usize, ProvError> {
        if self.ids.contains_key(&id) {
            return Err(ProvError::IdCollision(id));
        }
        let i = self.nodes.len();
        self.ids.insert(id.clone(), i);
        self.nodes.push(ProvNode { id, kind, attrs });
        self.out.push(Vec::new());
        Ok(i)
    }

    fn link(&mut self, src: usize, dst: usize, rel: Relation) {
        if self.edge_set.insert((src, dst, rel)) {
            self.edges.push((src, dst, rel));
            self.out[src].push(dst);
        }
    }

    fn agent(&mut self, kind: AgentKind, name: &str) -> usize {
        if let Some(&i) = self.agents.get(&(kind, name.to_string())) {
            return i;
        }
        let label = NodeKind::Agent(kind).label();
        let id = node_id("agent", &[label, name]);
        let attrs = NodeAttrs {
            name: Some(name.to_string()),
            ..Default::default()
        };
        let i = self.add(id, NodeKind::Agent(kind), attrs).expect("agent ids are unique per (kind, name)");
        self.agents.insert((kind, name.to_string()), i);
        i
    }

    /// Whether each node reaches a reading or an operator agent.
    fn grounded(&self) -> Vec<bool> {
        let n = self.nodes.len();
        let mut done = vec![false; n];
        let mut on_stack = vec![false; n];
        let mut g = vec![false; n];
        for root in 0..n {
            if done[root] {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            on_stack[root] = true;
            while let Some(top) = stack.last_mut() {
                let (i, k) = *top;
                if k < self.out[i].len() {
                    top.1 += 1;
                    let j = self.out[i][k];
                    if !done[j] && !on_stack[j] {
                        on_stack[j] = true;
                        stack.push((j, 0));
                    }
                } else {
                    let base = matches!(
                        self.nodes[i].kind,
                        NodeKind::Entity(EntityKind::Reading) | NodeKind::Agent(AgentKind::Operator)
                    );
                    g[i] = base || self.out[i].iter().any(|&j| g[j]);
                    done[i] = true;
                    on_stack[i] = false;
                    stack.pop();
                }
            }
        }
        g
    }
}

type Key = (String, String);

#[derive(Default)]
struct TickState {
    tick: u64,
    phase: Option<Phase>,
    readings: HashMap<Key, usize>,
    readings_by_plc: HashMap<String, Vec<usize>>,
    scans: HashMap<String, usize>,
    actuations: HashMap<String, usize>,
    /// Messages sent this tick, by receiver: `(channel, node)`.
    sent: HashMap<String, Vec<(String, usize)>>,
    /// Variable entities written this tick, committed when the tick ends.
    written: Vec<(Key, usize)>,
}

struct Ctx {
    b: Builder,
    now: TickState,
    var_latest: HashMap<Key, usize>,
    /// Messages delivered this tick, by receiver.
    inbox: HashMap<String, Vec<(String, usize)>>,
    message_scan: HashMap<usize, usize>,
}

fn need<'a, T>(v: &'a Option<T>, field: &str, line: usize, kind: RecordKind) -> Result<&'a T, ProvError> {
    v.as_ref().ok_or_else(|| ProvError::Malformed {
        line,
        message: format!("{kind} record without {field}"),
    })
}

fn record_attrs(r: &TraceRecord) -> NodeAttrs {
    NodeAttrs {
        tick: Some(r.tick),
        seq: Some(r.seq),
        plc: r.plc.clone(),
        name: r.var_name().map(str::to_string).or_else(|| r.channel.clone()),
        device: r.device.clone(),
        feature: r.feature.clone(),
        affects: r.affects.clone(),
        value: r.value.clone(),
        origin: r.origin.clone(),
        to: r.to.clone(),
        rule: r.rule,
        operator: r.operator.clone(),
        fault: r.fault.clone(),
        until: None,
    }
}

impl Ctx {
    fn advance(&mut self, r: &TraceRecord, line: usize) -> Result<(), ProvError> {
        if r.tick < self.now.tick {
            return Err(ProvError::OutOfOrder {
                line,
                message: format!("tick {} after tick {}", r.tick, self.now.tick),
            });
        }
        if r.tick == self.now.tick {
            if self.now.phase.is_some_and(|p| r.phase < p) {
                return Err(ProvError::OutOfOrder {
                    line,
                    message: format!("phase {:?} after {:?} in tick {}", r.phase, self.now.phase.unwrap(), r.tick),
                });
            }
            self.now.phase = Some(r.phase);
            return Ok(());
        }
        let prev = std::mem::take(&mut self.now);
        for (k, i) in prev.written {
            self.var_latest.insert(k, i);
        }
        self.inbox = if r.tick == prev.tick + 1 { prev.sent } else { HashMap::new() };
        self.now.tick = r.tick;
        self.now.phase = Some(r.phase);
        Ok(())
    }

    fn scan_of(&self, plc: &str, line: usize, kind: RecordKind) -> Result<usize, ProvError> {
        self.now.scans.get(plc).copied().ok_or_else(|| ProvError::Malformed {
            line,
            message: format!("{kind} record for {plc:?} before its scan record"),
        })
    }

    /// Links a rule output to the inputs its rule read.
    fn derive(&mut self, entity: usize, scan: usize, plc: &str, reads: Option<&ReadSet>) {
        let Some(reads) = reads else { return };
        for v in &reads.vars {
            let key = (plc.to_string(), v.clone());
            let src = self.now.readings.get(&key).or_else(|| self.var_latest.get(&key)).copied();
            if let Some(src) = src {
                self.b.link(entity, src, Relation::WasDerivedFrom);
                self.b.link(scan, src, Relation::Used);
            }
        }
        for ch in &reads.channels {
            let msgs: Vec<usize> = self
                .inbox
                .get(plc)
                .into_iter()
                .flatten()
                .filter(|(c, _)| c == ch)
                .map(|(_, m)| *m)
                .collect();
            for m in msgs {
                self.b.link(entity, m, Relation::WasDerivedFrom);
                self.b.link(scan, m, Relation::Used);
            }
        }
    }

    fn record(&mut self, r: &TraceRecord, line: usize) -> Result<(), ProvError> {
        self.advance(r, line)?;
        let tick = r.tick.to_string();
        let seq = r.seq.to_string();
        match r.kind {
            RecordKind::SensorReading => {
                let plc = need(&r.plc, "plc", line, r.kind)?;
                let var = need(&r.var, "var", line, r.kind)?;
                let device = need(&r.device, "device", line, r.kind)?;
                let origin = need(&r.origin, "origin", line, r.kind)?;
                need(&r.value, "value", line, r.kind)?;
                let id = node_id("reading", &[device, &tick, &seq]);
                let i = self.b.add(id, NodeKind::Entity(EntityKind::Reading), record_attrs(r))?;
                let dev = self.b.agent(AgentKind::SensorDevice, device);
                let org = self.b.agent(AgentKind::OriginPoint, origin);
                self.b.link(i, dev, Relation::WasAttributedTo);
                self.b.link(i, org, Relation::WasAttributedTo);
                self.now.readings.insert((plc.clone(), var.name.clone()), i);
                self.now.readings_by_plc.entry(plc.clone()).or_default().push(i);
            }
            RecordKind::Scan => {
                let plc = need(&r.plc, "plc", line, r.kind)?;
                if self.now.scans.contains_key(plc) {
                    return Err(ProvError::Malformed {
                        line,
                        message: format!("second scan of {plc:?} in tick {}", r.tick),
                    });
                }
                let id = node_id("scan", &[plc, &tick]);
                let attrs = NodeAttrs {
                    tick: Some(r.tick),
                    seq: Some(r.seq),
                    plc: Some(plc.clone()),
                    ..Default::default()
                };
                let s = self.b.add(id, NodeKind::Activity(ActivityKind::Scan), attrs)?;
                let agent = self.b.agent(AgentKind::Plc, plc);
                self.b.link(s, agent, Relation::WasAssociatedWith);
                for &rd in self.now.readings_by_plc.get(plc).into_iter().flatten() {
                    self.b.link(s, rd, Relation::Used);
                }
                let delivered: Vec<usize> = self.inbox.get(plc).into_iter().flatten().map(|(_, m)| *m).collect();
                for m in delivered {
                    self.b.link(s, m, Relation::Used);
                    if let Some(&sender) = self.message_scan.get(&m) {
                        self.b.link(s, sender, Relation::WasInformedBy);
                    }
                }
                self.now.scans.insert(plc.clone(), s);
            }
            RecordKind::ScanFault => {
                let plc = need(&r.plc, "plc", line, r.kind)?;
                let s = self.scan_of(plc, line, r.kind)?;
                self.b.nodes[s].attrs.fault = r.fault.clone().or_else(|| Some("fault".into()));
                self.b.nodes[s].attrs.rule = r.rule;
            }
            RecordKind::VarWrite => {
                let plc = need(&r.plc, "plc", line, r.kind)?;
                let var = need(&r.var, "var", line, r.kind)?;
                need(&r.value, "value", line, r.kind)?;
                let s = self.scan_of(plc, line, r.kind)?;
                let id = node_id("var", &[plc, &var.name, &tick, &seq]);
                let i = self.b.add(id, NodeKind::Entity(EntityKind::VariableState), record_attrs(r))?;
                self.b.link(i, s, Relation::WasGeneratedBy);
                self.derive(i, s, plc, r.reads.as_ref());
                self.now.written.push(((plc.clone(), var.name.clone()), i));
            }
            RecordKind::ActuatorCommand => {
                let plc = need(&r.plc, "plc", line, r.kind)?;
                let var = need(&r.var, "var", line, r.kind)?;
                let device = need(&r.device, "device", line, r.kind)?;
                need(&r.value, "value", line, r.kind)?;
                let id = node_id("command", &[device, &tick, &seq]);
                let i = self.b.add(id, NodeKind::Entity(EntityKind::Command), record_attrs(r))?;
                if let Some(op) = &r.operator {
                    let a = self.b.agent(AgentKind::Operator, op);
                    self.b.link(i, a, Relation::WasAttributedTo);
                    if let Some(o) = &r.origin {
                        let a = self.b.agent(AgentKind::OriginPoint, o);
                        self.b.link(i, a, Relation::WasAttributedTo);
                    }
                } else {
                    let s = self.scan_of(plc, line, r.kind)?;
                    self.b.link(i, s, Relation::WasGeneratedBy);
                    self.derive(i, s, plc, r.reads.as_ref());
                }
                let act = match self.now.actuations.get(device) {
                    Some(&a) => a,
                    None => {
                        let attrs = NodeAttrs {
                            tick: Some(r.tick),
                            plc: Some(plc.clone()),
                            device: Some(device.clone()),
                            affects: r.affects.clone(),
                            ..Default::default()
                        };
                        let a = self.b.add(node_id("actuation", &[device, &tick]), NodeKind::Activity(ActivityKind::Actuation), attrs)?;
                        let agent = self.b.agent(AgentKind::Plc, plc);
                        self.b.link(a, agent, Relation::WasAssociatedWith);
                        self.now.actuations.insert(device.clone(), a);
                        a
                    }
                };
                self.b.link(act, i, Relation::Used);
                self.now.written.push(((plc.clone(), var.name.clone()), i));
            }
            RecordKind::Message => {
                let channel = need(&r.channel, "channel", line, r.kind)?;
                let to = need(&r.to, "to", line, r.kind)?;
                let origin = need(&r.origin, "origin", line, r.kind)?;
                need(&r.value, "value", line, r.kind)?;
                let id = node_id("message", &[channel, &tick, &seq]);
                let i = self.b.add(id, NodeKind::Entity(EntityKind::Message), record_attrs(r))?;
                let org = self.b.agent(AgentKind::OriginPoint, origin);
                self.b.link(i, org, Relation::WasAttributedTo);
                if r.rule.is_some() {
                    let plc = need(&r.plc, "plc", line, r.kind)?;
                    let s = self.scan_of(plc, line, r.kind)?;
                    self.b.link(i, s, Relation::WasGeneratedBy);
                    self.derive(i, s, plc, r.reads.as_ref());
                    self.message_scan.insert(i, s);
                }
                self.now.sent.entry(to.clone()).or_default().push((channel.clone(), i));
            }
        }
        Ok(())
    }
}

fn build_micro(log: &TraceLog) -> Result<ProvGraph, ProvError> {
    let mut ctx = Ctx {
        b: Builder::default(),
        now: TickState::default(),
        var_latest: HashMap::new(),
        inbox: HashMap::new(),
        message_scan: HashMap::new(),
    };
    for (i, r) in log.records.iter().enumerate() {
        // header is line 1
        ctx.record(r, i + 2)?;
    }
    let mut b = ctx.b;
    let grounded = b.grounded();
    let orphans: Vec<usize> = (0..b.nodes.len())
        .filter(|&i| b.nodes[i].is(NodeKind::Entity(EntityKind::Command)) && !grounded[i])
        .collect();
    if !orphans.is_empty() {
        log::debug!("{} commands attributed to {ENGINEERING_WORKSTATION}", orphans.len());
        let ws = b.agent(AgentKind::Operator, ENGINEERING_WORKSTATION);
        for i in orphans {
            b.link(i, ws, Relation::WasAttributedTo);
        }
    }
    let edges = b
        .edges
        .iter()
        .map(|&(s, d, rel)| ProvEdge {
            src: b.nodes[s].id.clone(),
            dst: b.nodes[d].id.clone(),
            rel,
        })
        .collect();
    let meta = GraphMeta {
        scenario: log.header.scenario.clone(),
        scenario_hash: log.header.scenario_hash.clone(),
        seed: log.header.seed,
    };
    ProvGraph::from_parts(Level::Micro, meta, b.nodes, edges, BTreeMap::new())
}

/// Builds the provenance graph of a complete trace.
///
/// Records must be ordered by tick and, within a tick, by phase. A
/// malformed record fails the build with its line number (header = 1).
pub fn build_graph(log: &TraceLog, level: Level) -> Result<ProvGraph, ProvError> {
    let micro = build_micro(log)?;
    Ok(match level {
        Level::Micro => micro,
        Level::Macro => contract(&micro),
    })
}
