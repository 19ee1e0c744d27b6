use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::provenance::{EntityKind, NodeId, NodeKind, ProvGraph, Relation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeStep {
    pub node: NodeId,
    pub kind: String,
    pub text: String,
}

pub(crate) fn describe(g: &ProvGraph, i: usize) -> NarrativeStep {
    let n = g.node_at(i);
    let a = &n.attrs;
    let at = a.tick.map(|t| format!("@{t}")).unwrap_or_default();
    let val = a.value.as_ref().map(|v| format!(" = {v}")).unwrap_or_default();
    let text = match n.kind {
        NodeKind::Entity(EntityKind::Reading) => format!(
            "reading {}{at}{val} from {}",
            a.device.as_deref().unwrap_or("?"),
            a.origin.as_deref().unwrap_or("?")
        ),
        NodeKind::Entity(EntityKind::Command) => match &a.operator {
            Some(op) => format!("command {}{at}{val} by operator {op}", a.device.as_deref().unwrap_or("?")),
            None => format!("command {}{at}{val}", a.device.as_deref().unwrap_or("?")),
        },
        NodeKind::Entity(EntityKind::Message) => format!(
            "message {}{at}{val} to {}",
            a.name.as_deref().unwrap_or("?"),
            a.to.as_deref().unwrap_or("?")
        ),
        NodeKind::Entity(EntityKind::VariableState) => format!(
            "variable {}.{}{at}{val}",
            a.plc.as_deref().unwrap_or("?"),
            a.name.as_deref().unwrap_or("?")
        ),
        NodeKind::Activity(_) => format!(
            "{} {}{at}",
            n.kind.label(),
            a.device.as_deref().or(a.plc.as_deref()).unwrap_or("?")
        ),
        _ => format!("{} {}{at}", n.kind.label(), a.name.as_deref().or(a.feature.as_deref()).unwrap_or("?")),
    };
    NarrativeStep {
        node: n.id.clone(),
        kind: n.kind.label().to_string(),
        text,
    }
}

fn path_to(goal: usize, parent: &HashMap<usize, usize>) -> Vec<usize> {
    let mut path = vec![goal];
    let mut cur = goal;
    while let Some(&p) = parent.get(&cur) {
        path.push(p);
        cur = p;
    }
    path
}

/// Causal chain from the earliest reading in a command's lineage to the
/// command, passing through the scans and messages in between.
pub fn command_chain(g: &ProvGraph, cmd: usize) -> Vec<usize> {
    let lineage = g.lineage_indices(cmd);
    let key = |i: &usize| (g.node_at(*i).attrs.tick, g.node_at(*i).attrs.seq, *i);
    let goal = lineage
        .iter()
        .copied()
        .filter(|&i| g.is_reading(i))
        .min_by_key(key)
        .or_else(|| lineage.iter().copied().filter(|&i| i != cmd).min_by_key(key));
    let Some(goal) = goal else { return vec![cmd] };

    let step = |i: usize, process: bool| -> Vec<usize> {
        let n = g.node_at(i);
        g.out_edges(i)
            .iter()
            .filter(|(j, rel)| {
                if !process {
                    return *rel == Relation::WasDerivedFrom;
                }
                match rel {
                    Relation::WasGeneratedBy => n.kind.is_entity(),
                    Relation::Used => lineage.contains(j),
                    _ => false,
                }
            })
            .map(|(j, _)| *j)
            .collect()
    };
    for process in [true, false] {
        let mut parent: HashMap<usize, usize> = HashMap::new();
        let mut seen = BTreeSet::from([cmd]);
        let mut queue = VecDeque::from([cmd]);
        while let Some(i) = queue.pop_front() {
            if i == goal {
                return path_to(goal, &parent);
            }
            for j in step(i, process) {
                if seen.insert(j) {
                    parent.insert(j, i);
                    queue.push_back(j);
                }
            }
        }
    }
    vec![goal, cmd]
}

/// Narrative for a witness: the chain into the breaching command when
/// there is one (a focus command first, else the first impacted command),
/// otherwise the focus nodes in trace order.
pub fn narrate(g: &ProvGraph, focus: &[usize], impact: &[usize]) -> Vec<usize> {
    let target = focus
        .iter()
        .copied()
        .filter(|&i| g.is_command(i))
        .max()
        .or_else(|| impact.iter().copied().filter(|&i| g.is_command(i)).min());
    match target {
        Some(c) => command_chain(g, c),
        None => {
            let mut v = focus.to_vec();
            v.sort_unstable();
            v
        }
    }
}
