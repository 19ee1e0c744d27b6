//! Structural checks shared by the graph tests and the acceptance run.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::IndexedRandom;
use rand_chacha::ChaCha8Rng;

use plcprov_core::provenance::{AgentKind, EntityKind, NodeKind, ProvGraph, Relation};
use plcprov_core::trace::TraceLog;

use super::reference::{graph_edges, keyed, Key, Reference};

pub fn admitted(rel: Relation, src: &NodeKind, dst: &NodeKind) -> bool {
    use Relation::*;
    match rel {
        Used => src.is_activity() && dst.is_entity(),
        WasGeneratedBy => src.is_entity() && dst.is_activity(),
        WasAssociatedWith => src.is_activity() && dst.is_agent(),
        WasAttributedTo => src.is_entity() && dst.is_agent(),
        WasDerivedFrom => src.is_entity() && dst.is_entity(),
        WasInformedBy => src.is_activity() && dst.is_activity(),
    }
}

/// Kahn's algorithm over the raw edge list.
pub fn acyclic(g: &ProvGraph) -> bool {
    let idx: BTreeMap<&str, usize> = g.nodes().iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut indeg = vec![0usize; g.node_count()];
    let mut out = vec![Vec::new(); g.node_count()];
    for e in g.edges() {
        out[idx[e.src.as_str()]].push(idx[e.dst.as_str()]);
        indeg[idx[e.dst.as_str()]] += 1;
    }
    let mut queue: VecDeque<usize> = (0..indeg.len()).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = queue.pop_front() {
        seen += 1;
        for &j in &out[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                queue.push_back(j);
            }
        }
    }
    seen == g.node_count()
}

/// Reverse BFS on the raw edge list: everything `start` depends on, over the
/// relations accepted by `follow`.
pub fn upstream(g: &ProvGraph, start: &str, follow: fn(Relation) -> bool) -> BTreeSet<String> {
    let mut seen = BTreeSet::from([start.to_string()]);
    let mut queue = VecDeque::from([start.to_string()]);
    while let Some(id) = queue.pop_front() {
        for e in g.edges().iter().filter(|e| e.src == id && follow(e.rel)) {
            if seen.insert(e.dst.clone()) {
                queue.push_back(e.dst.clone());
            }
        }
    }
    seen
}

pub fn check_structure(g: &ProvGraph) {
    assert!(acyclic(g));
    assert!(g.is_acyclic());
    for e in g.edges() {
        let (s, d) = (g.node(&e.src).unwrap(), g.node(&e.dst).unwrap());
        assert!(admitted(e.rel, &s.kind, &d.kind), "{e:?}");
        if let (Some(ts), Some(td)) = (s.attrs.until.or(s.tick()), d.tick()) {
            assert!(td <= ts, "{e:?} points forward in time");
        }
    }
    assert!(g.mistyped_edges().is_empty());
}

pub fn operator_attributed(g: &ProvGraph, i: usize) -> bool {
    g.out_edges(i).iter().any(|&(j, r)| r == Relation::WasAttributedTo && g.node_at(j).kind == NodeKind::Agent(AgentKind::Operator))
}

pub fn check_quotient(log: &TraceLog, g: &ProvGraph, m: &ProvGraph, rng: &mut ChaCha8Rng) {
    let r = Reference::build(log);
    let (map, ref_edges) = r.contract();
    // the reference numbers intervals by epoch, the graph by first tick
    let mut first: BTreeMap<Key, u64> = BTreeMap::new();
    for (k, q) in &map {
        if let (Key::Interval(..), Key::Rec(t, _)) = (q, k) {
            let e = first.entry(q.clone()).or_insert(*t);
            *e = (*e).min(*t);
        }
    }
    let rename = |q: &Key| match q {
        Key::Interval(f, _) => Key::Interval(f.clone(), first[q] as usize),
        other => other.clone(),
    };
    let ref_edges: BTreeSet<_> = ref_edges.iter().map(|(s, d, rel)| (rename(s), rename(d), *rel)).collect();
    let km = keyed(m);
    assert_eq!(graph_edges(m, &km), ref_edges);
    let quotient_nodes: BTreeSet<Key> = map.values().map(rename).collect();
    assert_eq!(km.keys.iter().cloned().collect::<BTreeSet<_>>(), quotient_nodes);

    // members are exactly the pre-images
    let kg = keyed(g);
    let mut pre: BTreeMap<Key, BTreeSet<String>> = BTreeMap::new();
    for (id, k) in &kg.by_id {
        pre.entry(rename(&map[k])).or_default().insert(id.clone());
    }
    for (macro_id, ms) in m.members() {
        let got: BTreeSet<String> = ms.iter().cloned().collect();
        assert_eq!(got, pre[&km.by_id[macro_id]]);
    }
    let preimage = |id: &str| -> BTreeSet<String> {
        m.members().get(id).map(|v| v.iter().cloned().collect()).unwrap_or_else(|| BTreeSet::from([id.to_string()]))
    };

    // sampled macro edges each have a micro witness
    let micro_edges: BTreeSet<(String, String, Relation)> = g.edges().iter().map(|e| (e.src.clone(), e.dst.clone(), e.rel)).collect();
    for e in m.edges().choose_multiple(rng, 100) {
        let (ps, pd) = (preimage(&e.src), preimage(&e.dst));
        let witnessed = ps.iter().any(|s| pd.iter().any(|d| micro_edges.contains(&(s.clone(), d.clone(), e.rel))));
        assert!(witnessed, "macro edge {e:?} has no micro pre-image");
    }
}

/// Commands with neither a reading nor an operator-attributed entity upstream.
pub fn ungrounded_commands(g: &ProvGraph) -> Vec<String> {
    (0..g.node_count())
        .filter(|&i| g.node_at(i).kind == NodeKind::Entity(EntityKind::Command))
        .filter(|&i| {
            !g.ancestor_indices(i, None)
                .iter()
                .any(|&j| g.is_reading(j) || (g.node_at(j).kind.is_entity() && operator_attributed(g, j)))
        })
        .map(|i| g.node_at(i).id.clone())
        .collect()
}
