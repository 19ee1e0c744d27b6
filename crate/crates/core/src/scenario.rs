//! Shipped scenario bundles.
//!
//! A bundle is a directory holding `topology.json`, `programs.json`,
//! `plant.json`, `policies.json`, `manifest.json` and one run-events file per
//! variant under `variants/`. The manifest (`plcprov-manifest/1`) pins the
//! horizon and seed and lists, per variant, the policy ids a run must fire:
//!
//! ```json
//! {"schema": "plcprov-manifest/1", "bundle": "smart_building", "ticks": 200, "seed": 7,
//!  "assumptions": ["..."],
//!  "variants": {"forged_smoke": {"description": "...", "expect": ["guard_door_unlock"]}}}
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::sha256_hex;
use crate::logic::PlcProgram;
use crate::model::Topology;
use crate::plant::{run_simulation, validate_world, PlantParams, RunConfig, RunEvents, SimError, World};
use crate::policy::{parse_policies, Policy};
use crate::trace::TraceLog;

pub const MANIFEST_SCHEMA: &str = "plcprov-manifest/1";
pub const DEFAULT_BUNDLE: &str = "smart_building";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantInfo {
    #[serde(default)]
    pub description: String,
    pub expect: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub bundle: String,
    pub ticks: u64,
    pub seed: u64,
    #[serde(default)]
    pub assumptions: Vec<String>,
    pub variants: BTreeMap<String, VariantInfo>,
}

/// One runnable variant of a bundle, validated end to end.
#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub bundle: String,
    pub name: String,
    pub description: String,
    pub world: World,
    pub events: RunEvents,
    pub policies: Vec<Policy>,
    pub policy_text: String,
    /// Policy ids the pinned run must fire, sorted.
    pub expected: Vec<String>,
    pub ticks: u64,
    pub seed: u64,
    pub hash: String,
    pub manifest: Manifest,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {name:?} (known: {})", .known.join(", "))]
    Unknown { name: String, known: Vec<String> },
    #[error("{file}: {message}")]
    Parse { file: String, message: String },
    #[error("{file}: {}", .diagnostics.join("; "))]
    Invalid { file: String, diagnostics: Vec<String> },
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

struct Files {
    topology: String,
    programs: String,
    plant: String,
    policies: String,
    manifest: String,
    variants: BTreeMap<String, String>,
}

fn embedded(bundle: &str) -> Option<Files> {
    match bundle {
        "smart_building" => {
            macro_rules! f {
                ($p:literal) => {
                    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/smart_building/", $p)).to_string()
                };
            }
            let variants = [
                ("none", f!("variants/none.json")),
                ("forged_smoke", f!("variants/forged_smoke.json")),
                ("fire_drill", f!("variants/fire_drill.json")),
                ("thermostat_conflict", f!("variants/thermostat_conflict.json")),
                ("co_false_alarm", f!("variants/co_false_alarm.json")),
            ];
            Some(Files {
                topology: f!("topology.json"),
                programs: f!("programs.json"),
                plant: f!("plant.json"),
                policies: f!("policies.json"),
                manifest: f!("manifest.json"),
                variants: variants.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            })
        }
        _ => None,
    }
}

fn parse<T: serde::de::DeserializeOwned>(file: &str, text: &str) -> Result<T, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        file: file.to_string(),
        message: e.to_string(),
    })
}

/// Fingerprint of everything that determines a run apart from horizon and seed.
pub fn scenario_hash(world: &World, events: &RunEvents) -> String {
    let doc = serde_json::json!({"world": world, "events": events});
    sha256_hex(&serde_json::to_vec(&doc).expect("world serializes"))
}

fn assemble(files: &Files, variant: &str) -> Result<ScenarioBundle, ScenarioError> {
    let manifest: Manifest = parse("manifest.json", &files.manifest)?;
    if manifest.schema != MANIFEST_SCHEMA {
        return Err(ScenarioError::Parse {
            file: "manifest.json".into(),
            message: format!("unsupported schema {:?}", manifest.schema),
        });
    }
    let known: Vec<String> = manifest.variants.keys().cloned().collect();
    let (Some(info), Some(events_text)) = (manifest.variants.get(variant), files.variants.get(variant)) else {
        return Err(ScenarioError::Unknown {
            name: format!("{}/{variant}", manifest.bundle),
            known,
        });
    };
    let topology: Topology = parse("topology.json", &files.topology)?;
    let programs: Vec<PlcProgram> = parse("programs.json", &files.programs)?;
    let plant: PlantParams = parse("plant.json", &files.plant)?;
    let vfile = format!("variants/{variant}.json");
    let events: RunEvents = parse(&vfile, events_text)?;
    let world = World { topology, programs, plant };

    validate_world(&world, &events, manifest.ticks).map_err(|e| ScenarioError::Invalid {
        file: vfile.clone(),
        diagnostics: match e {
            SimError::Config(es) => es.iter().map(|x| x.to_string()).collect(),
            SimError::Type(es) => es.iter().map(|x| x.to_string()).collect(),
            other => vec![other.to_string()],
        },
    })?;
    let policies = parse_policies(&files.policies, &world.topology).map_err(|es| ScenarioError::Invalid {
        file: "policies.json".into(),
        diagnostics: es.iter().map(|x| x.to_string()).collect(),
    })?;
    let unknown: Vec<String> = info
        .expect
        .iter()
        .filter(|id| !policies.iter().any(|p| &p.id == *id))
        .map(|id| format!("expected policy {id:?} is not defined"))
        .collect();
    if !unknown.is_empty() {
        return Err(ScenarioError::Invalid {
            file: "manifest.json".into(),
            diagnostics: unknown,
        });
    }
    let mut expected = info.expect.clone();
    expected.sort();
    expected.dedup();
    let hash = scenario_hash(&world, &events);
    Ok(ScenarioBundle {
        bundle: manifest.bundle.clone(),
        name: variant.to_string(),
        description: info.description.clone(),
        world,
        events,
        policies,
        policy_text: files.policies.clone(),
        expected,
        ticks: manifest.ticks,
        seed: manifest.seed,
        hash,
        manifest,
    })
}

pub fn bundle_names() -> Vec<&'static str> {
    vec![DEFAULT_BUNDLE]
}

/// Variant names of the default bundle.
pub fn scenario_names() -> Vec<String> {
    embedded(DEFAULT_BUNDLE).map(|f| f.variants.keys().cloned().collect()).unwrap_or_default()
}

/// Loads a shipped scenario. Accepts `variant`, `bundle/variant`, or a bare
/// bundle name (its `none` variant).
pub fn load_scenario(name: &str) -> Result<ScenarioBundle, ScenarioError> {
    let (bundle, variant) = match name.split_once('/') {
        Some((b, v)) => (b, v),
        None if embedded(name).is_some() => (name, "none"),
        None => (DEFAULT_BUNDLE, name),
    };
    let unknown = || ScenarioError::Unknown {
        name: name.to_string(),
        known: scenario_names(),
    };
    let files = embedded(bundle).ok_or_else(unknown)?;
    if !files.variants.contains_key(variant) {
        return Err(unknown());
    }
    assemble(&files, variant)
}

/// Loads a variant from a bundle directory on disk.
pub fn load_scenario_dir(dir: &Path, variant: &str) -> Result<ScenarioBundle, ScenarioError> {
    let read = |rel: &str| std::fs::read_to_string(dir.join(rel)).map_err(|e| ScenarioError::Io(dir.join(rel).display().to_string(), e));
    let mut variants = BTreeMap::new();
    let vdir = dir.join("variants");
    let entries = std::fs::read_dir(&vdir).map_err(|e| ScenarioError::Io(vdir.display().to_string(), e))?;
    for entry in entries {
        let path = entry.map_err(|e| ScenarioError::Io(vdir.display().to_string(), e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                variants.insert(stem.to_string(), read(&format!("variants/{stem}.json"))?);
            }
        }
    }
    let files = Files {
        topology: read("topology.json")?,
        programs: read("programs.json")?,
        plant: read("plant.json")?,
        policies: read("policies.json")?,
        manifest: read("manifest.json")?,
        variants,
    };
    assemble(&files, variant)
}

impl ScenarioBundle {
    /// Run configuration at the pinned horizon and seed unless overridden.
    pub fn run_config(&self, ticks: Option<u64>, seed: Option<u64>) -> RunConfig {
        RunConfig {
            ticks: ticks.unwrap_or(self.ticks),
            seed: seed.unwrap_or(self.seed),
            scenario: self.name.clone(),
            scenario_hash: self.hash.clone(),
        }
    }

    pub fn simulate(&self, ticks: Option<u64>, seed: Option<u64>) -> Result<TraceLog, SimError> {
        run_simulation(&self.world, &self.events, &self.run_config(ticks, seed))
    }
}
