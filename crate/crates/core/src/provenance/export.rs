use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::graph::{GraphMeta, Level, NodeId, ProvEdge, ProvGraph, ProvNode};
use super::ProvError;

pub const PROVJSON_SCHEMA: &str = "plcprov-provjson/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    schema: String,
    level: Level,
    meta: GraphMeta,
    nodes: Vec<ProvNode>,
    edges: Vec<ProvEdge>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    members: BTreeMap<NodeId, Vec<NodeId>>,
}

/// JSON document of the graph. The output is a pure function of the graph.
pub fn to_provjson(g: &ProvGraph) -> String {
    let doc = Document {
        schema: PROVJSON_SCHEMA.to_string(),
        level: g.level,
        meta: g.meta.clone(),
        nodes: g.nodes().to_vec(),
        edges: g.edges().to_vec(),
        members: g.members().clone(),
    };
    let mut s = serde_json::to_string(&doc).expect("graph serializes");
    s.push('\n');
    s
}

pub fn from_provjson(text: &str) -> Result<ProvGraph, ProvError> {
    let doc: Document = serde_json::from_str(text).map_err(|e| ProvError::Document(e.to_string()))?;
    if doc.schema != PROVJSON_SCHEMA {
        return Err(ProvError::Document(format!("unsupported schema {:?}", doc.schema)));
    }
    ProvGraph::from_parts(doc.level, doc.meta, doc.nodes, doc.edges, doc.members)
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn label(n: &ProvNode) -> String {
    let a = &n.attrs;
    let mut lines = vec![n.kind.label().to_string()];
    let subject = a.device.as_ref().or(a.name.as_ref()).or(a.plc.as_ref());
    match (subject, a.tick, a.until) {
        (Some(s), Some(t), Some(u)) => lines.push(format!("{s} [{t},{u})")),
        (Some(s), Some(t), None) => lines.push(format!("{s} @{t}")),
        (Some(s), None, _) => lines.push(s.clone()),
        (None, Some(t), _) => lines.push(format!("@{t}")),
        (None, None, _) => {}
    }
    if let Some(v) = &a.value {
        lines.push(format!("= {v}"));
    }
    if let Some(o) = &a.origin {
        lines.push(format!("from {o}"));
    }
    lines.join("\n")
}

/// Graphviz rendering. Entities are ellipses, activities boxes and agents
/// houses; `highlight` nodes are drawn filled red.
pub fn to_dot(g: &ProvGraph, highlight: &BTreeSet<NodeId>) -> String {
    let mut s = String::new();
    let name = format!("{} seed {}", g.meta.scenario, g.meta.seed);
    let _ = writeln!(s, "digraph provenance {{");
    let _ = writeln!(s, "  label={};", quote(&name));
    let _ = writeln!(s, "  rankdir=BT;");
    let _ = writeln!(s, "  node [fontname=\"Helvetica\", fontsize=10];");
    let _ = writeln!(s, "  edge [fontname=\"Helvetica\", fontsize=8];");
    for n in g.nodes() {
        let (shape, fill) = if n.kind.is_entity() {
            ("ellipse", "#fffbe6")
        } else if n.kind.is_activity() {
            ("box", "#e6f0ff")
        } else {
            ("house", "#f2e6d9")
        };
        let fill = if highlight.contains(&n.id) { "#f4a6a6" } else { fill };
        let _ = writeln!(
            s,
            "  {} [label={}, shape={shape}, style=filled, fillcolor=\"{fill}\"];",
            quote(&n.id),
            quote(&label(n))
        );
    }
    for e in g.edges() {
        let _ = writeln!(s, "  {} -> {} [label={}];", quote(&e.src), quote(&e.dst), quote(e.rel.name()));
    }
    s.push_str("}\n");
    s
}
