use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::graph::{ActivityKind, EntityKind, Level, NodeAttrs, NodeId, NodeKind, ProvEdge, ProvGraph, ProvNode};
use crate::hashing::short_id;

/// Contracts a micro graph into the macro view.
///
/// Readings of one feature collapse into one interval per stretch between
/// actuations of that feature (a reading at tick `t` belongs after every
/// actuation at a tick `< t`). Actuations of one actuator at consecutive
/// ticks collapse into an episode. Every other node is kept. Edges are the
/// quotient of the micro edges with self-loops dropped; `members` records
/// which micro nodes each contracted node stands for.
///
/// Contraction cannot create a cycle: readings only depend on agents, and
/// nothing depends on an actuation.
pub fn contract(micro: &ProvGraph) -> ProvGraph {
    let nodes = micro.nodes();

    let mut boundaries: BTreeMap<&str, BTreeSet<u64>> = BTreeMap::new();
    let mut actuation_ticks: BTreeMap<&str, BTreeSet<u64>> = BTreeMap::new();
    for n in nodes.iter().filter(|n| n.is(NodeKind::Activity(ActivityKind::Actuation))) {
        let (Some(t), Some(dev)) = (n.attrs.tick, n.attrs.device.as_deref()) else { continue };
        for f in &n.attrs.affects {
            boundaries.entry(f).or_default().insert(t);
        }
        actuation_ticks.entry(dev).or_default().insert(t);
    }
    let episode_start = |dev: &str, t: u64| -> u64 {
        let ticks = &actuation_ticks[dev];
        let mut start = t;
        while start > 0 && ticks.contains(&(start - 1)) {
            start -= 1;
        }
        start
    };

    let mut target: Vec<NodeId> = Vec::with_capacity(nodes.len());
    let mut macro_nodes: Vec<ProvNode> = Vec::new();
    let mut macro_index: HashMap<NodeId, usize> = HashMap::new();
    let mut members: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();

    for n in nodes {
        let group = match n.kind {
            NodeKind::Entity(EntityKind::Reading) => match (n.attrs.feature.as_deref(), n.attrs.tick) {
                (Some(f), Some(t)) => {
                    let epoch = boundaries.get(f).map_or(0, |b| b.range(..t).count());
                    let id = format!("feature_interval:{}", short_id(&["feature_interval", f, &epoch.to_string()]));
                    let attrs = NodeAttrs {
                        feature: Some(f.to_string()),
                        name: Some(f.to_string()),
                        ..Default::default()
                    };
                    Some((id, NodeKind::Entity(EntityKind::FeatureInterval), attrs))
                }
                _ => None,
            },
            NodeKind::Activity(ActivityKind::Actuation) => match (n.attrs.device.as_deref(), n.attrs.tick) {
                (Some(dev), Some(t)) => {
                    let start = episode_start(dev, t);
                    let id = format!("actuator_episode:{}", short_id(&["actuator_episode", dev, &start.to_string()]));
                    let attrs = NodeAttrs {
                        device: Some(dev.to_string()),
                        plc: n.attrs.plc.clone(),
                        affects: n.attrs.affects.clone(),
                        ..Default::default()
                    };
                    Some((id, NodeKind::Activity(ActivityKind::ActuatorEpisode), attrs))
                }
                _ => None,
            },
            _ => None,
        };
        match group {
            Some((id, kind, attrs)) => {
                let t = n.attrs.tick.unwrap_or(0);
                let idx = *macro_index.entry(id.clone()).or_insert_with(|| {
                    macro_nodes.push(ProvNode {
                        id: id.clone(),
                        kind,
                        attrs: NodeAttrs {
                            tick: Some(t),
                            until: Some(t + 1),
                            ..attrs
                        },
                    });
                    macro_nodes.len() - 1
                });
                let a = &mut macro_nodes[idx].attrs;
                a.tick = a.tick.map(|x| x.min(t));
                a.until = a.until.map(|x| x.max(t + 1));
                members.entry(id.clone()).or_default().push(n.id.clone());
                target.push(id);
            }
            None => {
                macro_index.insert(n.id.clone(), macro_nodes.len());
                macro_nodes.push(n.clone());
                target.push(n.id.clone());
            }
        }
    }

    let edges: Vec<ProvEdge> = micro
        .edges()
        .iter()
        .filter_map(|e| {
            let s = &target[micro.index_of(&e.src)?];
            let d = &target[micro.index_of(&e.dst)?];
            (s != d).then(|| ProvEdge {
                src: s.clone(),
                dst: d.clone(),
                rel: e.rel,
            })
        })
        .collect();

    ProvGraph::from_parts(Level::Macro, micro.meta.clone(), macro_nodes, edges, members).expect("quotient of a valid graph")
}
