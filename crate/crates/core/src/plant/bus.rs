use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dynamics::{PlantParams, PlantState};
use crate::hashing::digest_parts;
use crate::model::{SignalValue, Topology, VariableRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusEventKind {
    SensorReading { sensor: String, var: VariableRef, feature: String },
    ActuatorCommand { actuator: String, var: VariableRef },
    InterPlcMessage { channel: String, from: String, to: String },
}

/// One unit of traffic on the control bus, stamped with the attachment
/// point it was emitted from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusEvent {
    pub tick: u64,
    pub kind: BusEventKind,
    pub value: SignalValue,
    pub origin: String,
    pub seq: u32,
}

impl BusEvent {
    pub fn sensor(&self) -> Option<&str> {
        match &self.kind {
            BusEventKind::SensorReading { sensor, .. } => Some(sensor),
            _ => None,
        }
    }
}

/// Deterministic generator for one sensor at one tick. Streams are keyed by
/// sensor id, so adding a sensor never shifts another sensor's noise.
pub fn noise_rng(seed: u64, sensor: &str, tick: u64) -> ChaCha8Rng {
    let seed_bytes = seed.to_le_bytes();
    let tick_bytes = tick.to_le_bytes();
    let key = digest_parts([b"sensor-noise".as_slice(), &seed_bytes, sensor.as_bytes(), &tick_bytes]);
    ChaCha8Rng::from_seed(key)
}

/// Reads every sensor once, in declaration order.
pub fn sample_sensors(
    state: &PlantState,
    topology: &Topology,
    params: &PlantParams,
    seed: u64,
    tick: u64,
) -> Vec<BusEvent> {
    let mut out = Vec::with_capacity(topology.sensors.len());
    for s in &topology.sensors {
        let (Some(var), Some(truth)) = (topology.sensor_var(s), state.feature_values.get(&s.measures)) else {
            continue;
        };
        let sigma = params.sensor_noise.get(&s.id).copied().unwrap_or(0.0);
        let value = match truth {
            SignalValue::Float(x) if sigma > 0.0 => {
                let normal = Normal::new(0.0, sigma).expect("sigma validated");
                let noisy = x + normal.sample(&mut noise_rng(seed, &s.id, tick));
                SignalValue::float(noisy).unwrap_or(SignalValue::Float(*x))
            }
            other => other.clone(),
        };
        out.push(BusEvent {
            tick,
            kind: BusEventKind::SensorReading {
                sensor: s.id.clone(),
                var,
                feature: s.measures.clone(),
            },
            value,
            origin: s.origin.clone(),
            seq: out.len() as u32,
        });
    }
    out
}
