use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{SignalValue, ValueType};

/// Rule expression AST, written as externally tagged JSON:
/// `{"and": [{"var": "smoke_in"}, {"not": {"var": "alarm_out"}}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Lit(SignalValue),
    Var(String),
    /// Payload of the latest message received on a channel this scan.
    Msg(String),
    /// Whether any message arrived on a channel this scan.
    Received(String),
    Tick,
    /// `tick - var` for an integer variable holding a tick.
    Elapsed(String),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Eq(Box<Expr>, Box<Expr>),
    Ne(Box<Expr>, Box<Expr>),
    Lt(Box<Expr>, Box<Expr>),
    Le(Box<Expr>, Box<Expr>),
    Gt(Box<Expr>, Box<Expr>),
    Ge(Box<Expr>, Box<Expr>),
    In(Box<Expr>, Vec<SignalValue>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
}

/// Variables and channels an expression mentions, regardless of which
/// branches evaluation takes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadSet {
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub vars: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub channels: BTreeSet<String>,
}

impl ReadSet {
    pub fn is_empty(&self) -> bool {
        self.vars.is_empty() && self.channels.is_empty()
    }

    pub fn extend(&mut self, other: &ReadSet) {
        self.vars.extend(other.vars.iter().cloned());
        self.channels.extend(other.channels.iter().cloned());
    }
}

impl Expr {
    pub fn collect_reads(&self, out: &mut ReadSet) {
        match self {
            Expr::Lit(_) | Expr::Tick => {}
            Expr::Var(v) | Expr::Elapsed(v) => {
                out.vars.insert(v.clone());
            }
            Expr::Msg(c) | Expr::Received(c) => {
                out.channels.insert(c.clone());
            }
            Expr::Not(e) | Expr::In(e, _) => e.collect_reads(out),
            Expr::And(es) | Expr::Or(es) => es.iter().for_each(|e| e.collect_reads(out)),
            Expr::Eq(a, b)
            | Expr::Ne(a, b)
            | Expr::Lt(a, b)
            | Expr::Le(a, b)
            | Expr::Gt(a, b)
            | Expr::Ge(a, b)
            | Expr::Add(a, b)
            | Expr::Sub(a, b) => {
                a.collect_reads(out);
                b.collect_reads(out);
            }
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Expr::Lit(_) => "lit",
            Expr::Var(_) => "var",
            Expr::Msg(_) => "msg",
            Expr::Received(_) => "received",
            Expr::Tick => "tick",
            Expr::Elapsed(_) => "elapsed",
            Expr::Not(_) => "not",
            Expr::And(_) => "and",
            Expr::Or(_) => "or",
            Expr::Eq(..) => "eq",
            Expr::Ne(..) => "ne",
            Expr::Lt(..) => "lt",
            Expr::Le(..) => "le",
            Expr::Gt(..) => "gt",
            Expr::Ge(..) => "ge",
            Expr::In(..) => "in",
            Expr::Add(..) => "add",
            Expr::Sub(..) => "sub",
        }
    }
}

/// Static type of an expression. Enum literals have no declared set of their
/// own and unify with any enum type declaring the member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ty {
    Bool,
    Int,
    Float,
    Enum(Vec<String>),
    EnumLit(String),
}

impl Ty {
    pub fn from_decl(t: &ValueType) -> Ty {
        match t {
            ValueType::Bool => Ty::Bool,
            ValueType::Int => Ty::Int,
            ValueType::Float => Ty::Float,
            ValueType::Enum(s) => Ty::Enum(s.clone()),
        }
    }

    fn of_literal(v: &SignalValue) -> Ty {
        match v {
            SignalValue::Bool(_) => Ty::Bool,
            SignalValue::Int(_) => Ty::Int,
            SignalValue::Float(_) => Ty::Float,
            SignalValue::Enum(s) => Ty::EnumLit(s.clone()),
        }
    }

    fn is_numeric(&self) -> bool {
        matches!(self, Ty::Int | Ty::Float)
    }

    fn name(&self) -> String {
        match self {
            Ty::Bool => "bool".into(),
            Ty::Int => "int".into(),
            Ty::Float => "float".into(),
            Ty::Enum(s) => format!("enum{{{}}}", s.join(",")),
            Ty::EnumLit(s) => format!("enum literal {s:?}"),
        }
    }

    /// Whether values of the two types may be compared for equality.
    pub fn comparable(&self, other: &Ty) -> bool {
        match (self, other) {
            (a, b) if a.is_numeric() && b.is_numeric() => true,
            (Ty::Bool, Ty::Bool) => true,
            (Ty::Enum(a), Ty::Enum(b)) => a.iter().any(|m| b.contains(m)),
            (Ty::Enum(set), Ty::EnumLit(m)) | (Ty::EnumLit(m), Ty::Enum(set)) => set.contains(m),
            (Ty::EnumLit(_), Ty::EnumLit(_)) => true,
            _ => false,
        }
    }

    /// Whether a value of type `self` may be stored in a slot declared `slot`.
    pub fn assignable_to(&self, slot: &ValueType) -> bool {
        match (self, slot) {
            (Ty::Bool, ValueType::Bool) => true,
            (Ty::Int, ValueType::Int) => true,
            (Ty::Int | Ty::Float, ValueType::Float) => true,
            (Ty::EnumLit(m), ValueType::Enum(set)) => set.contains(m),
            (Ty::Enum(a), ValueType::Enum(b)) => a.iter().all(|m| b.contains(m)),
            _ => false,
        }
    }
}

/// What an expression may refer to, as seen from one PLC.
pub trait TypeEnv {
    fn var_type(&self, name: &str) -> Option<ValueType>;
    /// Payload type of a channel this PLC receives on.
    fn inbound_channel(&self, channel: &str) -> Option<ValueType>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExprTypeError {
    pub path: String,
    pub message: String,
}

pub fn type_of(e: &Expr, env: &dyn TypeEnv, path: &str) -> Result<Ty, ExprTypeError> {
    let here = format!("{path}.{}", e.tag());
    let err = |message: String| ExprTypeError {
        path: here.clone(),
        message,
    };
    match e {
        Expr::Lit(v) => Ok(Ty::of_literal(v)),
        Expr::Var(name) => env
            .var_type(name)
            .map(|t| Ty::from_decl(&t))
            .ok_or_else(|| err(format!("undeclared variable {name:?}"))),
        Expr::Msg(ch) => env
            .inbound_channel(ch)
            .map(|t| Ty::from_decl(&t))
            .ok_or_else(|| err(format!("channel {ch:?} is not received by this PLC"))),
        Expr::Received(ch) => env
            .inbound_channel(ch)
            .map(|_| Ty::Bool)
            .ok_or_else(|| err(format!("channel {ch:?} is not received by this PLC"))),
        Expr::Tick => Ok(Ty::Int),
        Expr::Elapsed(name) => match env.var_type(name) {
            Some(ValueType::Int) => Ok(Ty::Int),
            Some(t) => Err(err(format!("elapsed needs an int variable, {name:?} is {t}"))),
            None => Err(err(format!("undeclared variable {name:?}"))),
        },
        Expr::Not(inner) => match type_of(inner, env, &here)? {
            Ty::Bool => Ok(Ty::Bool),
            t => Err(err(format!("not expects bool, found {}", t.name()))),
        },
        Expr::And(es) | Expr::Or(es) => {
            for (i, sub) in es.iter().enumerate() {
                let t = type_of(sub, env, &format!("{here}[{i}]"))?;
                if t != Ty::Bool {
                    return Err(err(format!("operand {i} must be bool, found {}", t.name())));
                }
            }
            Ok(Ty::Bool)
        }
        Expr::Eq(a, b) | Expr::Ne(a, b) => {
            let ta = type_of(a, env, &format!("{here}[0]"))?;
            let tb = type_of(b, env, &format!("{here}[1]"))?;
            if ta.comparable(&tb) {
                Ok(Ty::Bool)
            } else {
                Err(err(format!("cannot compare {} with {}", ta.name(), tb.name())))
            }
        }
        Expr::Lt(a, b) | Expr::Le(a, b) | Expr::Gt(a, b) | Expr::Ge(a, b) => {
            let ta = type_of(a, env, &format!("{here}[0]"))?;
            let tb = type_of(b, env, &format!("{here}[1]"))?;
            if ta.is_numeric() && tb.is_numeric() {
                Ok(Ty::Bool)
            } else {
                Err(err(format!("ordering needs numbers, found {} and {}", ta.name(), tb.name())))
            }
        }
        Expr::In(inner, set) => {
            let t = type_of(inner, env, &format!("{here}[0]"))?;
            for v in set {
                if !t.comparable(&Ty::of_literal(v)) {
                    return Err(err(format!("member {v} is not comparable with {}", t.name())));
                }
            }
            Ok(Ty::Bool)
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            let ta = type_of(a, env, &format!("{here}[0]"))?;
            let tb = type_of(b, env, &format!("{here}[1]"))?;
            match (&ta, &tb) {
                (Ty::Int, Ty::Int) => Ok(Ty::Int),
                (x, y) if x.is_numeric() && y.is_numeric() => Ok(Ty::Float),
                _ => Err(err(format!("arithmetic needs numbers, found {} and {}", ta.name(), tb.name()))),
            }
        }
    }
}

/// A message waiting in a PLC's inbox.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InboxMessage {
    pub channel: String,
    pub payload: SignalValue,
}

pub struct EvalContext<'a> {
    pub lookup: &'a dyn Fn(&str) -> Option<SignalValue>,
    pub inbox: &'a [InboxMessage],
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("variable {0:?} has no value")]
    Unbound(String),
    #[error("no message received on channel {0:?}")]
    NoMessage(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("integer overflow")]
    Overflow,
}

fn tick_int(tick: u64) -> Result<i64, EvalError> {
    i64::try_from(tick).map_err(|_| EvalError::Overflow)
}

fn cmp_values(a: &SignalValue, b: &SignalValue) -> Result<Ordering, EvalError> {
    a.numeric_cmp(b)
        .ok_or_else(|| EvalError::Type(format!("cannot order {} and {}", a.type_name(), b.type_name())))
}

fn eval_bool(e: &Expr, ctx: &EvalContext<'_>) -> Result<bool, EvalError> {
    let v = eval(e, ctx)?;
    v.as_bool()
        .ok_or_else(|| EvalError::Type(format!("expected bool, found {}", v.type_name())))
}

fn arith(a: SignalValue, b: SignalValue, sub: bool) -> Result<SignalValue, EvalError> {
    match (&a, &b) {
        (SignalValue::Int(x), SignalValue::Int(y)) => {
            let r = if sub { x.checked_sub(*y) } else { x.checked_add(*y) };
            r.map(SignalValue::Int).ok_or(EvalError::Overflow)
        }
        _ => {
            let (x, y) = match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => (x, y),
                _ => return Err(EvalError::Type("arithmetic on non-numeric values".into())),
            };
            let r = if sub { x - y } else { x + y };
            SignalValue::float(r).ok_or(EvalError::Overflow)
        }
    }
}

/// Evaluates an expression against a frozen snapshot. Evaluation has no side
/// effects; `and`/`or` short-circuit.
pub fn eval(e: &Expr, ctx: &EvalContext<'_>) -> Result<SignalValue, EvalError> {
    match e {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Var(name) => (ctx.lookup)(name).ok_or_else(|| EvalError::Unbound(name.clone())),
        Expr::Msg(ch) => ctx
            .inbox
            .iter()
            .rev()
            .find(|m| &m.channel == ch)
            .map(|m| m.payload.clone())
            .ok_or_else(|| EvalError::NoMessage(ch.clone())),
        Expr::Received(ch) => Ok(SignalValue::Bool(ctx.inbox.iter().any(|m| &m.channel == ch))),
        Expr::Tick => Ok(SignalValue::Int(tick_int(ctx.tick)?)),
        Expr::Elapsed(name) => {
            let v = (ctx.lookup)(name).ok_or_else(|| EvalError::Unbound(name.clone()))?;
            match v {
                SignalValue::Int(since) => tick_int(ctx.tick)?
                    .checked_sub(since)
                    .map(SignalValue::Int)
                    .ok_or(EvalError::Overflow),
                other => Err(EvalError::Type(format!("elapsed over {}", other.type_name()))),
            }
        }
        Expr::Not(inner) => Ok(SignalValue::Bool(!eval_bool(inner, ctx)?)),
        Expr::And(es) => {
            for sub in es {
                if !eval_bool(sub, ctx)? {
                    return Ok(SignalValue::Bool(false));
                }
            }
            Ok(SignalValue::Bool(true))
        }
        Expr::Or(es) => {
            for sub in es {
                if eval_bool(sub, ctx)? {
                    return Ok(SignalValue::Bool(true));
                }
            }
            Ok(SignalValue::Bool(false))
        }
        Expr::Eq(a, b) => Ok(SignalValue::Bool(eval(a, ctx)?.loosely_equals(&eval(b, ctx)?))),
        Expr::Ne(a, b) => Ok(SignalValue::Bool(!eval(a, ctx)?.loosely_equals(&eval(b, ctx)?))),
        Expr::Lt(a, b) => Ok(SignalValue::Bool(cmp_values(&eval(a, ctx)?, &eval(b, ctx)?)?.is_lt())),
        Expr::Le(a, b) => Ok(SignalValue::Bool(cmp_values(&eval(a, ctx)?, &eval(b, ctx)?)?.is_le())),
        Expr::Gt(a, b) => Ok(SignalValue::Bool(cmp_values(&eval(a, ctx)?, &eval(b, ctx)?)?.is_gt())),
        Expr::Ge(a, b) => Ok(SignalValue::Bool(cmp_values(&eval(a, ctx)?, &eval(b, ctx)?)?.is_ge())),
        Expr::In(inner, set) => {
            let v = eval(inner, ctx)?;
            Ok(SignalValue::Bool(set.iter().any(|m| m.loosely_equals(&v))))
        }
        Expr::Add(a, b) => arith(eval(a, ctx)?, eval(b, ctx)?, false),
        Expr::Sub(a, b) => arith(eval(a, ctx)?, eval(b, ctx)?, true),
    }
}
