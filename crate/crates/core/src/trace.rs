//! JSON Lines trace log: one header line followed by one record per line.
//!
//! ```text
//! {"schema":"plcprov-trace/1","scenario":"forged_smoke","scenario_hash":"…","seed":7,"ticks":200,"ms_per_tick":100}
//! {"tick":0,"ms":0,"phase":"sample","kind":"sensor_reading","plc":"safety","var":{"name":"smoke_in","dir":"in","line":"I0.0"},"value":false,"origin":"secure-area","seq":0,"device":"smoke_detector","feature":"smoke"}
//! ```
//!
//! The nine leading record keys are always present (`null` when not
//! applicable); the trailing keys appear only when set. Records are ordered
//! by `(tick, phase, plc, seq)`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::ReadSet;
use crate::model::{Direction, SignalValue};

pub const TRACE_SCHEMA: &str = "plcprov-trace/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub schema: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub ticks: u64,
    pub ms_per_tick: u64,
}

/// Fixed order of work inside one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Sample,
    Attack,
    Deliver,
    Scan,
    Publish,
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    SensorReading,
    /// Scan cycle boundary for one PLC.
    Scan,
    /// Write to an Internal variable or an Out variable without an actuator.
    VarWrite,
    ScanFault,
    ActuatorCommand,
    Message,
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarInfo {
    pub name: String,
    pub dir: Direction,
    pub line: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub tick: u64,
    pub ms: u64,
    pub phase: Phase,
    pub kind: RecordKind,
    pub plc: Option<String>,
    pub var: Option<VarInfo>,
    pub value: Option<SignalValue>,
    pub origin: Option<String>,
    pub seq: u32,
    /// Sensor id for readings, actuator id for commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<String>,
    /// Feature a reading measures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<String>,
    /// Features an actuator command affects.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub affects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
    /// Receiving PLC of a message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    /// Index of the rule that produced a write, command or message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<usize>,
    /// Static read set of that rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reads: Option<ReadSet>,
    /// Operator id for commands issued from the HMI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

impl TraceRecord {
    /// Bare record; callers fill the fields their kind needs.
    pub fn new(tick: u64, ms: u64, phase: Phase, kind: RecordKind, seq: u32) -> Self {
        Self {
            tick,
            ms,
            phase,
            kind,
            plc: None,
            var: None,
            value: None,
            origin: None,
            seq,
            device: None,
            feature: None,
            affects: Vec::new(),
            channel: None,
            to: None,
            rule: None,
            reads: None,
            operator: None,
            fault: None,
        }
    }

    /// Sort key the log is ordered by.
    pub fn order_key(&self) -> (u64, Phase, &str, u32) {
        (self.tick, self.phase, self.plc.as_deref().unwrap_or(""), self.seq)
    }

    pub fn var_name(&self) -> Option<&str> {
        self.var.as_ref().map(|v| v.name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLog {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is empty: missing header line")]
    MissingHeader,
    #[error("line {line}: malformed header: {message}")]
    Header { line: usize, message: String },
    #[error("unsupported trace schema {0:?} (expected {TRACE_SCHEMA:?})")]
    Schema(String),
    #[error("line {line}: malformed record: {message}")]
    Record { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl TraceLog {
    pub fn new(header: TraceHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
        }
    }

    /// Serializes to JSON Lines. Output is a pure function of the log.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses JSON Lines. Blank lines are skipped; line numbers in errors are
    /// 1-based.
    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, htext) = lines.next().ok_or(TraceError::MissingHeader)?;
        let header: TraceHeader = serde_json::from_str(htext).map_err(|e| TraceError::Header {
            line: hline,
            message: e.to_string(),
        })?;
        if header.schema != TRACE_SCHEMA {
            return Err(TraceError::Schema(header.schema));
        }
        let mut records = Vec::new();
        for (line, text) in lines {
            let r: TraceRecord = serde_json::from_str(text).map_err(|e| TraceError::Record {
                line,
                message: e.to_string(),
            })?;
            records.push(r);
        }
        Ok(Self { header, records })
    }

    pub fn read_path(path: &Path) -> Result<Self, TraceError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn write_path(&self, path: &Path) -> Result<(), TraceError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}
