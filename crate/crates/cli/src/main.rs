//! `plcprov`: simulate a scenario, build its provenance graph, check policies
//! and explain the findings.
//!
//! Exit codes: 0 clean, 1 violations found (`check`), 2 any error.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{debug, info, warn};

use plcprov_core::detect::{detect, explain, question_policies, render_text, Report};
use plcprov_core::policy::{parse_policies, Policy};
use plcprov_core::provenance::{build_graph, contract, from_provjson, to_dot, to_provjson, Level, ProvGraph};
use plcprov_core::scenario::{bundle_names, load_scenario, load_scenario_dir, ScenarioBundle};
use plcprov_core::trace::TraceLog;

#[derive(Parser, Debug)]
#[command(name = "plcprov", version, about = "Provenance-based violation detection for simulated PLC networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LevelArg {
    Micro,
    Macro,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Self {
        match l {
            LevelArg::Micro => Level::Micro,
            LevelArg::Macro => Level::Macro,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Dot,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write its trace log (JSON Lines).
    Simulate {
        /// Shipped scenario name (`forged_smoke`, `smart_building/none`, ...) or a bundle directory.
        #[arg(long)]
        scenario: String,
        /// Variant to run; overrides the one named by --scenario.
        #[arg(long)]
        attack: Option<String>,
        /// Horizon in ticks [default: the bundle's pinned value, 200].
        #[arg(long)]
        ticks: Option<u64>,
        /// RNG seed [default: the bundle's pinned value, 7].
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the provenance graph of a trace.
    Build {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "micro")]
        level: LevelArg,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the graph of a trace, evaluate policies and write a report.
    Check {
        #[arg(long)]
        trace: PathBuf,
        /// Policy document [default: the bundle's policies.json].
        #[arg(long)]
        policies: Option<PathBuf>,
        /// Scenario supplying the topology [default: the one named in the trace header].
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Narrate one violation and render its explanation subgraph.
    Explain {
        #[arg(long)]
        report: PathBuf,
        /// Graph file (ProvJSON) or trace log (.jsonl) the report was built from.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        violation: String,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer one of the administrator questions q1..q6 over a graph.
    Query {
        /// Graph file (ProvJSON) or trace log (.jsonl).
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        question: String,
        /// Policies to answer from [default: one per device of the topology].
        #[arg(long)]
        policies: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a graph to DOT or ProvJSON, optionally contracting it to the macro level.
    Export {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum)]
        level: Option<LevelArg>,
        #[arg(long, value_enum, default_value = "dot")]
        format: Format,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            info!("wrote {}", p.display());
        }
        None => match std::io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            r => r?,
        },
    }
    Ok(())
}

fn check_seed(requested: Option<u64>, recorded: u64) -> Result<()> {
    match requested {
        Some(s) if s != recorded => bail!("--seed {s} does not match the recorded seed {recorded}"),
        _ => Ok(()),
    }
}

fn open_scenario(spec: &str, variant: Option<&str>) -> Result<ScenarioBundle> {
    let path = Path::new(spec);
    let bundle = if path.is_dir() {
        load_scenario_dir(path, variant.unwrap_or("none"))?
    } else {
        let name = match (variant, spec.split_once('/')) {
            (Some(v), Some((b, _))) => format!("{b}/{v}"),
            (Some(v), None) if bundle_names().contains(&spec) => format!("{spec}/{v}"),
            (Some(v), None) => v.to_string(),
            (None, _) => spec.to_string(),
        };
        load_scenario(&name)?
    };
    debug!("loaded scenario {}/{} hash {}", bundle.bundle, bundle.name, bundle.hash);
    Ok(bundle)
}

/// Scenario for a recorded run: the explicit one, else the one the header names.
fn scenario_for(explicit: Option<&str>, recorded: &str, recorded_hash: &str) -> Result<ScenarioBundle> {
    let b = match explicit {
        Some(s) if Path::new(s).is_dir() => open_scenario(s, Some(recorded))?,
        Some(s) => open_scenario(s, None)?,
        None => load_scenario(recorded).with_context(|| format!("trace names scenario {recorded:?}; pass --scenario"))?,
    };
    if b.hash != recorded_hash {
        warn!("scenario hash {} differs from the recorded {recorded_hash}", b.hash);
    }
    Ok(b)
}

fn load_graph(path: &Path) -> Result<ProvGraph> {
    let text = read(path)?;
    let is_trace = path.extension().is_some_and(|e| e == "jsonl");
    let g = if is_trace {
        build_graph(&TraceLog::from_jsonl(&text)?, Level::Micro)?
    } else {
        from_provjson(&text).with_context(|| format!("loading {}", path.display()))?
    };
    Ok(g)
}

fn load_policies(path: &Path, b: &ScenarioBundle) -> Result<Vec<Policy>> {
    parse_policies(&read(path)?, &b.world.topology).map_err(|es| {
        let lines: Vec<String> = es.iter().map(|e| e.to_string()).collect();
        anyhow!("{}: {}", path.display(), lines.join("; "))
    })
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate {
            scenario,
            attack,
            ticks,
            seed,
            out,
        } => {
            let b = open_scenario(&scenario, attack.as_deref())?;
            let log = b.simulate(ticks, seed)?;
            info!("{} records over {} ticks", log.records.len(), log.header.ticks);
            emit(out.as_deref(), &log.to_jsonl())?;
            Ok(0)
        }
        Command::Build {
            trace,
            level,
            format,
            seed,
            out,
        } => {
            let log = TraceLog::from_jsonl(&read(&trace)?)?;
            check_seed(seed, log.header.seed)?;
            let g = build_graph(&log, level.into())?;
            info!("{} nodes, {} edges", g.node_count(), g.edge_count());
            let text = match format {
                Format::Json => to_provjson(&g),
                Format::Dot => to_dot(&g, &BTreeSet::new()),
                Format::Text => bail!("build writes json or dot"),
            };
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
        Command::Check {
            trace,
            policies,
            scenario,
            format,
            seed,
            out,
        } => {
            let log = TraceLog::from_jsonl(&read(&trace)?)?;
            check_seed(seed, log.header.seed)?;
            let b = scenario_for(scenario.as_deref(), &log.header.scenario, &log.header.scenario_hash)?;
            let policies = match &policies {
                Some(p) => load_policies(p, &b)?,
                None => b.policies.clone(),
            };
            let g = build_graph(&log, Level::Micro)?;
            let report = detect(&g, &policies, &b.world.topology);
            if !report.config_errors.is_empty() {
                let errs: Vec<String> = report.config_errors.iter().map(|e| e.to_string()).collect();
                bail!("policy configuration errors: {}", errs.join("; "));
            }
            let text = match format {
                Format::Json => report.to_json(),
                Format::Text => render_text(&report),
                Format::Dot => bail!("check writes json or text"),
            };
            emit(out.as_deref(), &text)?;
            info!("{} violation(s)", report.violations.len());
            Ok(if report.violations.is_empty() { 0 } else { 1 })
        }
        Command::Explain {
            report,
            graph,
            violation,
            format,
            seed,
            out,
        } => {
            let report = Report::from_json(&read(&report)?).context("parsing report")?;
            check_seed(seed, report.seed)?;
            let g = load_graph(&graph)?;
            if g.meta.scenario_hash != report.scenario_hash || g.meta.seed != report.seed {
                bail!("graph and report come from different runs");
            }
            let (steps, dot) = explain(&report, &violation, &g)?;
            let text = match format {
                Format::Dot => dot,
                Format::Json => {
                    let v = report.violation(&violation).expect("explain found it");
                    let mut s = serde_json::to_string_pretty(&serde_json::json!({
                        "violation": v.id,
                        "policy_id": v.policy_id,
                        "tick_span": v.tick_span,
                        "narrative": steps,
                        "explanation": v.explanation,
                    }))?;
                    s.push('\n');
                    s
                }
                Format::Text => {
                    let mut s = String::new();
                    for (k, step) in steps.iter().enumerate() {
                        s.push_str(if k == 0 { "   " } else { "-> " });
                        s.push_str(&step.text);
                        s.push('\n');
                    }
                    s
                }
            };
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
        Command::Query {
            graph,
            question,
            policies,
            scenario,
            seed,
            out,
        } => {
            if !matches!(question.as_str(), "q1" | "q2" | "q3" | "q4" | "q5" | "q6") {
                bail!("unknown question {question:?} (expected q1..q6)");
            }
            let g = load_graph(&graph)?;
            check_seed(seed, g.meta.seed)?;
            let b = scenario_for(scenario.as_deref(), &g.meta.scenario, &g.meta.scenario_hash)?;
            let policies = match &policies {
                Some(p) => load_policies(p, &b)?,
                None => question_policies(&b.world.topology),
            };
            let report = detect(&g, &policies, &b.world.topology);
            let answer = report.question_answers.answer(&question).expect("question id checked");
            let mut s = serde_json::to_string_pretty(&serde_json::json!({
                "question": question,
                "scenario": report.scenario,
                "seed": report.seed,
                "answer": answer,
            }))?;
            s.push('\n');
            emit(out.as_deref(), &s)?;
            Ok(0)
        }
        Command::Export {
            graph,
            level,
            format,
            seed,
            out,
        } => {
            let mut g = load_graph(&graph)?;
            check_seed(seed, g.meta.seed)?;
            if matches!(level, Some(LevelArg::Macro)) && g.level == Level::Micro {
                g = contract(&g);
            } else if matches!(level, Some(LevelArg::Micro)) && g.level == Level::Macro {
                bail!("a macro graph cannot be expanded back to micro");
            }
            let text = match format {
                Format::Dot => to_dot(&g, &BTreeSet::new()),
                Format::Json => to_provjson(&g),
                Format::Text => bail!("export writes dot or json"),
            };
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PLCPROV_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
