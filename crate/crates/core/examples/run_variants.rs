use plcprov_core::detect::{detect, render_text};
use plcprov_core::provenance::{build_graph, Level};
use plcprov_core::scenario::{load_scenario, scenario_names};

fn main() {
    for name in scenario_names() {
        let b = load_scenario(&name).expect("load");
        let log = b.simulate(None, None).expect("sim");
        let g = build_graph(&log, Level::Micro).expect("graph");
        let r = detect(&g, &b.policies, &b.world.topology);
        let mut fired: Vec<String> = r.violations.iter().map(|v| v.policy_id.clone()).collect();
        fired.sort();
        fired.dedup();
        println!("{name}: fired {fired:?} expected {:?} {}", b.expected, if fired == b.expected { "OK" } else { "MISMATCH" });
        if std::env::var("VERBOSE").is_ok() {
            println!("{}", render_text(&r));
        }
    }
}
