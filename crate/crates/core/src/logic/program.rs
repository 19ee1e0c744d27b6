use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::expr::{type_of, Expr, ReadSet, Ty, TypeEnv};
use crate::model::{Direction, Topology, ValueType, VariableDecl, VariableRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Set {
        var: String,
        value: Expr,
    },
    Send {
        channel: String,
        payload: Expr,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub when: Expr,
    pub then: Vec<Action>,
}

impl Rule {
    /// Every variable and channel the condition or any action mentions.
    pub fn read_set(&self) -> ReadSet {
        let mut rs = ReadSet::default();
        self.when.collect_reads(&mut rs);
        for a in &self.then {
            match a {
                Action::Set { value, .. } => value.collect_reads(&mut rs),
                Action::Send { payload, .. } => payload.collect_reads(&mut rs),
            }
        }
        rs
    }
}

/// Ordered rule list for one PLC plus its internal variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlcProgram {
    pub plc: String,
    #[serde(default)]
    pub internal: Vec<VariableDecl>,
    #[serde(default)]
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypeError {
    pub plc: String,
    /// Index of the offending rule, absent for declaration errors.
    pub rule: Option<usize>,
    pub path: String,
    pub message: String,
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rule {
            Some(r) => write!(f, "{} rule {r} at {}: {}", self.plc, self.path, self.message),
            None => write!(f, "{} at {}: {}", self.plc, self.path, self.message),
        }
    }
}

/// A program bound to its PLC's declared variables and links.
#[derive(Debug, Clone)]
pub struct ProgramImage {
    pub program: PlcProgram,
    pub vars: BTreeMap<String, VariableDecl>,
    /// Channels this PLC receives on, with payload types.
    pub inbound: BTreeMap<String, ValueType>,
    /// Channels this PLC sends on: payload type and receiving PLC.
    pub outbound: BTreeMap<String, (ValueType, String)>,
    pub read_sets: Vec<ReadSet>,
}

impl ProgramImage {
    /// Binds a program to a topology. Unknown PLCs yield an image with only
    /// the internal variables, so typechecking can still report everything.
    pub fn new(program: &PlcProgram, topology: &Topology) -> Self {
        let mut vars = BTreeMap::new();
        if let Some(plc) = topology.plc(&program.plc) {
            for v in &plc.variables {
                vars.insert(v.name.clone(), v.clone());
            }
        }
        for v in &program.internal {
            vars.entry(v.name.clone()).or_insert_with(|| v.clone());
        }
        let inbound = topology
            .links
            .iter()
            .filter(|l| l.to == program.plc)
            .map(|l| (l.channel.clone(), l.payload.clone()))
            .collect();
        let outbound = topology
            .links
            .iter()
            .filter(|l| l.from == program.plc)
            .map(|l| (l.channel.clone(), (l.payload.clone(), l.to.clone())))
            .collect();
        let read_sets = program.rules.iter().map(Rule::read_set).collect();
        Self {
            program: program.clone(),
            vars,
            inbound,
            outbound,
            read_sets,
        }
    }

    pub fn plc(&self) -> &str {
        &self.program.plc
    }

    pub fn var_ref(&self, name: &str) -> Option<VariableRef> {
        self.vars.get(name).map(|v| VariableRef {
            plc: self.program.plc.clone(),
            name: v.name.clone(),
            dir: v.dir,
            line: v.line.clone(),
        })
    }

    pub fn inputs(&self) -> impl Iterator<Item = &VariableDecl> {
        self.vars.values().filter(|v| v.dir == Direction::In)
    }

    /// Initial values of all Out and Internal variables.
    pub fn initial_state(&self) -> BTreeMap<String, crate::model::SignalValue> {
        self.vars
            .values()
            .filter(|v| v.dir != Direction::In)
            .map(|v| (v.name.clone(), v.initial_value()))
            .collect()
    }
}

impl TypeEnv for ProgramImage {
    fn var_type(&self, name: &str) -> Option<ValueType> {
        self.vars.get(name).map(|v| v.ty.clone())
    }

    fn inbound_channel(&self, channel: &str) -> Option<ValueType> {
        self.inbound.get(channel).cloned()
    }
}

/// Checks a program against its topology: declarations, expression types,
/// write targets and channel directions.
pub fn typecheck_program(p: &PlcProgram, t: &Topology) -> Vec<TypeError> {
    let mut errors = Vec::new();
    let decl_err = |path: String, message: String| TypeError {
        plc: p.plc.clone(),
        rule: None,
        path,
        message,
    };

    let plc = t.plc(&p.plc);
    if plc.is_none() {
        errors.push(decl_err("plc".into(), format!("PLC {:?} is not declared in the topology", p.plc)));
    }
    let mut seen = std::collections::BTreeSet::new();
    for (i, v) in p.internal.iter().enumerate() {
        let path = format!("internal[{i}]");
        if v.dir != Direction::Internal {
            errors.push(decl_err(path.clone(), format!("{:?} must have direction internal", v.name)));
        }
        if plc.and_then(|plc| plc.variable(&v.name)).is_some() || !seen.insert(&v.name) {
            errors.push(decl_err(path.clone(), format!("variable {:?} declared more than once", v.name)));
        }
        if let Some(init) = &v.initial {
            if !v.ty.admits(init) {
                errors.push(decl_err(path, format!("initial value {init} is not a {}", v.ty)));
            }
        }
    }

    let image = ProgramImage::new(p, t);
    for (ri, rule) in p.rules.iter().enumerate() {
        let rule_err = |path: String, message: String| TypeError {
            plc: p.plc.clone(),
            rule: Some(ri),
            path,
            message,
        };
        match type_of(&rule.when, &image, "when") {
            Ok(Ty::Bool) => {}
            Ok(other) => errors.push(rule_err("when".into(), format!("condition must be bool, found {other:?}"))),
            Err(e) => errors.push(rule_err(e.path, e.message)),
        }
        for (ai, action) in rule.then.iter().enumerate() {
            let base = format!("then[{ai}]");
            match action {
                Action::Set { var, value } => {
                    let decl = image.vars.get(var);
                    match decl {
                        None => errors.push(rule_err(base.clone(), format!("writes undeclared variable {var:?}"))),
                        Some(d) if d.dir == Direction::In => {
                            errors.push(rule_err(base.clone(), format!("writes input variable {var:?}")))
                        }
                        Some(_) => {}
                    }
                    match type_of(value, &image, &format!("{base}.set.value")) {
                        Err(e) => errors.push(rule_err(e.path, e.message)),
                        Ok(ty) => {
                            if let Some(d) = decl {
                                if !ty.assignable_to(&d.ty) {
                                    errors.push(rule_err(
                                        format!("{base}.set"),
                                        format!("cannot assign {ty:?} to {var:?} of type {}", d.ty),
                                    ));
                                }
                            }
                        }
                    }
                }
                Action::Send { channel, payload } => {
                    let out = image.outbound.get(channel);
                    if out.is_none() {
                        errors.push(rule_err(
                            base.clone(),
                            format!("channel {channel:?} is not sent on by this PLC"),
                        ));
                    }
                    match type_of(payload, &image, &format!("{base}.send.payload")) {
                        Err(e) => errors.push(rule_err(e.path, e.message)),
                        Ok(ty) => {
                            if let Some((pt, _)) = out {
                                if !ty.assignable_to(pt) {
                                    errors.push(rule_err(
                                        format!("{base}.send"),
                                        format!("payload {ty:?} does not fit channel type {pt}"),
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    errors
}
