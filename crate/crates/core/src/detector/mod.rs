//! DetectorScript: a closed language for pattern detectors.
//!
//! ```text
//! DETECT name [PARAMS {key: type, ...}] WHERE expr [EMIT {key: expr, ...}]
//! ```
//!
//! A detector fires at every frame where its `WHERE` clause holds. When the
//! clause opens with a chain of `exists_object` quantifiers, each satisfying
//! tuple of bindings emits its own event.

pub mod ast;
mod interp;
mod mutate;
mod parser;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub use ast::{BinOp, Expr, ObjFilter, ParamType, Prim, Ty};
pub use interp::{
    known_uids, run_detector, run_on_view, AnnotationContext, ContextEvent, EmittedEvent, RunError,
    RunOutput, TraceView, DEFAULT_STEP_BUDGET,
};
pub use mutate::{grammar_mutate, JITTER_TABLE};
pub use parser::chain_vars;

use crate::lex::Pos;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax,
    UnknownPrimitive,
    Arity,
    Type,
    UndeclaredParameter,
    UnboundVariable,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{pos}: {message}")]
pub struct DetectorError {
    pub kind: ErrorKind,
    pub pos: Pos,
    pub message: String,
    /// Tokens that would have been accepted, for syntax errors.
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorProgram {
    pub name: String,
    pub source: String,
    pub params: Vec<(String, ParamType)>,
    pub body: Expr,
    pub emit: Vec<(String, Expr)>,
    pub node_count: usize,
    pub depends_on: Vec<String>,
}

impl DetectorProgram {
    pub fn parameters_schema(&self) -> BTreeMap<String, String> {
        self.params
            .iter()
            .map(|(k, t)| (k.clone(), t.as_str().to_string()))
            .collect()
    }

    /// Canonical single-line source.
    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for DetectorProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DETECT {}", self.name)?;
        if !self.params.is_empty() {
            let ps: Vec<String> = self
                .params
                .iter()
                .map(|(k, t)| format!("{k}: {}", t.as_str()))
                .collect();
            write!(f, " PARAMS {{{}}}", ps.join(", "))?;
        }
        write!(f, " WHERE {}", self.body)?;
        if !self.emit.is_empty() {
            let es: Vec<String> = self.emit.iter().map(|(k, e)| format!("{k}: {e}")).collect();
            write!(f, " EMIT {{{}}}", es.join(", "))?;
        }
        Ok(())
    }
}

pub fn parse_detector(source: &str) -> Result<DetectorProgram, DetectorError> {
    let p = parser::parse(source)?;
    let node_count =
        p.body.node_count() + p.emit.iter().map(|(_, e)| e.node_count()).sum::<usize>();
    let mut uids = BTreeSet::new();
    p.body.collect_uids(&mut uids);
    for (_, e) in &p.emit {
        e.collect_uids(&mut uids);
    }
    Ok(DetectorProgram {
        name: p.name,
        source: source.to_string(),
        params: p.params,
        body: p.body,
        emit: p.emit,
        node_count,
        depends_on: uids.into_iter().collect(),
    })
}

pub fn program_length(program: &DetectorProgram) -> usize {
    program.node_count
}
