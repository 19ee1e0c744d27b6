use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::expr::{eval, EvalContext, EvalError, InboxMessage};
use super::program::{Action, ProgramImage};
use crate::model::{Direction, SignalValue, VariableRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputWrite {
    pub var: VariableRef,
    pub value: SignalValue,
    pub rule: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentMessage {
    pub channel: String,
    pub to: String,
    pub payload: SignalValue,
    pub rule: usize,
}

/// Everything one scan cycle observed and produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub plc: String,
    pub tick: u64,
    pub inputs_snapshot: BTreeMap<String, SignalValue>,
    /// Every write in rule order then action order, including overwritten ones.
    pub outputs_written: Vec<OutputWrite>,
    pub messages_sent: Vec<SentMessage>,
}

impl ScanResult {
    /// Last write per variable: the values the PLC holds after the scan.
    pub fn final_values(&self) -> BTreeMap<&str, &SignalValue> {
        let mut out = BTreeMap::new();
        for w in &self.outputs_written {
            out.insert(w.var.name.as_str(), &w.value);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("scan fault on {plc} at tick {tick}, rule {rule:?}: {message}")]
pub struct ScanFault {
    pub plc: String,
    pub tick: u64,
    pub rule: Option<usize>,
    pub message: String,
}

/// Runs one scan cycle.
///
/// `state` holds the current Out and Internal values, `inputs` the sampled In
/// values. Every condition and action expression is evaluated against the
/// same pre-scan snapshot, so rule order affects only which write lands last.
/// A fault aborts the whole scan and nothing is written.
pub fn scan(
    program: &ProgramImage,
    state: &BTreeMap<String, SignalValue>,
    inputs: &BTreeMap<String, SignalValue>,
    inbox: &[InboxMessage],
    tick: u64,
) -> Result<ScanResult, ScanFault> {
    let fault = |rule: Option<usize>, message: String| ScanFault {
        plc: program.plc().to_string(),
        tick,
        rule,
        message,
    };

    let mut inputs_snapshot = BTreeMap::new();
    for decl in program.inputs() {
        let v = inputs
            .get(&decl.name)
            .ok_or_else(|| fault(None, format!("input {:?} missing from snapshot", decl.name)))?;
        inputs_snapshot.insert(decl.name.clone(), v.clone());
    }

    let lookup = |name: &str| -> Option<SignalValue> {
        match program.vars.get(name)?.dir {
            Direction::In => inputs_snapshot.get(name).cloned(),
            _ => state.get(name).cloned(),
        }
    };
    let ctx = EvalContext {
        lookup: &lookup,
        inbox,
        tick,
    };
    let wrap = |ri: usize| move |e: EvalError| fault(Some(ri), e.to_string());

    let mut outputs_written = Vec::new();
    let mut messages_sent = Vec::new();
    for (ri, rule) in program.program.rules.iter().enumerate() {
        let fires = eval(&rule.when, &ctx).map_err(wrap(ri))?;
        match fires {
            SignalValue::Bool(true) => {}
            SignalValue::Bool(false) => continue,
            other => return Err(fault(Some(ri), format!("condition evaluated to {}", other.type_name()))),
        }
        for action in &rule.then {
            match action {
                Action::Set { var, value } => {
                    let var_ref = program
                        .var_ref(var)
                        .filter(|r| r.dir != Direction::In)
                        .ok_or_else(|| fault(Some(ri), format!("cannot write {var:?}")))?;
                    let decl = &program.vars[var];
                    let v = eval(value, &ctx).map_err(wrap(ri))?;
                    if !decl.ty.admits(&v) {
                        return Err(fault(Some(ri), format!("value {v} does not fit {var:?} of type {}", decl.ty)));
                    }
                    outputs_written.push(OutputWrite {
                        var: var_ref,
                        value: decl.ty.coerce(v),
                        rule: ri,
                    });
                }
                Action::Send { channel, payload } => {
                    let (ty, to) = program
                        .outbound
                        .get(channel)
                        .ok_or_else(|| fault(Some(ri), format!("cannot send on {channel:?}")))?;
                    let v = eval(payload, &ctx).map_err(wrap(ri))?;
                    if !ty.admits(&v) {
                        return Err(fault(Some(ri), format!("payload {v} does not fit channel {channel:?}")));
                    }
                    messages_sent.push(SentMessage {
                        channel: channel.clone(),
                        to: to.clone(),
                        payload: ty.coerce(v),
                        rule: ri,
                    });
                }
            }
        }
    }

    Ok(ScanResult {
        plc: program.plc().to_string(),
        tick,
        inputs_snapshot,
        outputs_written,
        messages_sent,
    })
}
