//! Per-tick PLC program execution.

mod expr;
mod program;
mod scan;

pub use expr::{eval, type_of, EvalContext, EvalError, Expr, ExprTypeError, InboxMessage, ReadSet, Ty, TypeEnv};
pub use program::{typecheck_program, Action, PlcProgram, ProgramImage, Rule, TypeError};
pub use scan::{scan, OutputWrite, ScanFault, ScanResult, SentMessage};
