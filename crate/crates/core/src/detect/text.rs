use std::fmt::Write as _;

use super::Report;

fn span(s: [u64; 2]) -> String {
    if s[1] == u64::MAX {
        format!("[{}, end)", s[0])
    } else {
        format!("[{}, {})", s[0], s[1])
    }
}

/// Long lists keep their head and tail.
fn abbreviated(items: Vec<String>, sep: &str) -> String {
    if items.len() <= 8 {
        return items.join(sep);
    }
    let n = items.len();
    format!("{}{sep}... {} more ...{sep}{}", items[..3].join(sep), n - 5, items[n - 2..].join(sep))
}

fn list<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Plain-text rendering for an administrator.
pub fn render_text(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario {} (seed {}, hash {})", r.scenario, r.seed, r.scenario_hash);
    let _ = writeln!(s, "{} violation(s) from {} match(es)", r.counts.violations, r.counts.matches);
    for e in &r.config_errors {
        let _ = writeln!(s, "config error: {e}");
    }
    for v in &r.violations {
        let _ = writeln!(s);
        let _ = writeln!(s, "[{}] {} ({}) ticks {}", v.severity, v.id, v.kind, span(v.tick_span));
        if !v.witness.values.is_empty() {
            let vals = v.witness.values.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "  values: {}", abbreviated(vals, ", "));
        }
        let _ = writeln!(
            s,
            "  explanation: {} nodes, {} edges",
            v.explanation.nodes.len(),
            v.explanation.edges.len()
        );
        let steps = v.narrative.iter().map(|n| n.text.clone()).collect();
        let _ = writeln!(s, "     {}", abbreviated(steps, "\n  -> "));
    }
    let qa = &r.question_answers;
    let _ = writeln!(s);
    let _ = writeln!(s, "q1 duplicate actuations: {}", qa.q1_duplicates.len());
    for d in &qa.q1_duplicates {
        let _ = writeln!(s, "  {} ticks {}: {} commands [{}]", d.actuator, span(d.tick_span), d.commands.len(), list(&d.values));
    }
    let _ = writeln!(s, "q2 same or different: {}", qa.q2_same_or_different.len());
    for c in &qa.q2_same_or_different {
        let _ = writeln!(s, "  {} ticks {}: {} [{}]", c.actuator, span(c.tick_span), c.classification, list(&c.values));
    }
    let _ = writeln!(s, "q3 reasons: {}", qa.q3_reasons.len());
    for reason in &qa.q3_reasons {
        let chain = list(reason.narrative.iter().map(|n| n.text.as_str()));
        let _ = writeln!(s, "  {}: {chain}", reason.actuator);
    }
    let _ = writeln!(s, "q4 influencing sensors: {}", qa.q4_influencing_sensors.len());
    for i in &qa.q4_influencing_sensors {
        let value = i.value.as_ref().map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "  {} = {value}: {{{}}}", i.actuator, list(&i.sensors));
    }
    let _ = writeln!(s, "q5 range excursions: {}", r.counts.range_occurrences);
    for x in &qa.q5_range_excursions {
        let _ = writeln!(
            s,
            "  {}: {} time(s), durations [{}], total {} ticks",
            x.sensor,
            x.occurrences,
            list(&x.durations),
            x.total_duration
        );
    }
    let _ = writeln!(s, "q6 feature contention: {}", qa.q6_contention.len());
    for c in &qa.q6_contention {
        let _ = writeln!(s, "  {}: ticks [{}], up to {} actuators", c.feature, list(&c.ticks), c.max_actuators);
    }
    s
}
