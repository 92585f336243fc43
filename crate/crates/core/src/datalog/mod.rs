//! Stratified Datalog: rule files, validation, evaluation and the
//! predicate-negation transform.

mod eval;
mod facts;
mod naive;
mod negate;
mod program;
mod syntax;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eval::evaluate;
pub use facts::{FactSet, Tuple, Value, ValueType};
pub use naive::evaluate_naive;
pub use negate::{negate_predicate, NegationOutcome, SkipReason};
pub use program::{Atom, Literal, Param, PredicateDecl, PredicateRole, Rule, RuleProgram, Term};


#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatalogError {
    #[error("rule parse error at line {line}: {message}")]
    RuleParse { line: u32, message: String },
    #[error("unsafe rule #{rule}: variable `{variable}` is not bound by a positive body literal")]
    UnsafeRule { rule: usize, variable: String },
    #[error("program is not stratifiable: negation inside cycle {}", cycle.join(" -> "))]
    NonStratified { cycle: Vec<String> },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("type mismatch in facts of `{predicate}`: {message}")]
    TypeMismatch { predicate: String, message: String },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

/// One reported alert: a tuple of the alert predicate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AlertInstance {
    pub rule_id: String,
    pub predicate: String,
    pub args: Vec<Value>,
}

impl AlertInstance {
    pub fn locations(&self) -> impl Iterator<Item = &crate::minilang::Location> {
        self.args.iter().filter_map(Value::as_loc)
    }
}

/// One alert per tuple of the alert predicate in `full_facts`.
pub fn alerts_of(program: &RuleProgram, full_facts: &FactSet) -> Vec<AlertInstance> {
    full_facts
        .tuples(program.alert_predicate())
        .map(|t| AlertInstance {
            rule_id: program.rule_id().to_string(),
            predicate: program.alert_predicate().to_string(),
            args: t.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests;
