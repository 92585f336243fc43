use std::fmt;

use serde::{Deserialize, Serialize};

use super::program::RuleProgram;
use super::DatalogError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    NotABodyPredicate,
    AlertPredicate,
    UnsafeAfterFlip,
    NonStratifiedAfterFlip,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::NotABodyPredicate => "not-a-body-predicate",
            SkipReason::AlertPredicate => "alert-predicate",
            SkipReason::UnsafeAfterFlip => "unsafe-after-flip",
            SkipReason::NonStratifiedAfterFlip => "non-stratified-after-flip",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NegationOutcome {
    Transformed(RuleProgram),
    Skipped(SkipReason),
}

impl NegationOutcome {
    pub fn program(&self) -> Option<&RuleProgram> {
        match self {
            NegationOutcome::Transformed(p) => Some(p),
            NegationOutcome::Skipped(_) => None,
        }
    }

    pub fn skip_reason(&self) -> Option<SkipReason> {
        match self {
            NegationOutcome::Transformed(_) => None,
            NegationOutcome::Skipped(r) => Some(*r),
        }
    }
}

/// Flip the polarity of every body occurrence of `pred`, leaving heads
/// alone, and re-validate. A flip the program cannot support is a skip.
pub fn negate_predicate(program: &RuleProgram, pred: &str) -> Result<NegationOutcome, DatalogError> {
    if program.decl(pred).is_none() {
        return Err(DatalogError::UnknownPredicate(pred.to_string()));
    }
    if pred == program.alert_predicate() {
        return Ok(NegationOutcome::Skipped(SkipReason::AlertPredicate));
    }
    if !program.is_body_predicate(pred) {
        return Ok(NegationOutcome::Skipped(SkipReason::NotABodyPredicate));
    }
    let rules = program
        .rules()
        .iter()
        .cloned()
        .map(|mut r| {
            for lit in &mut r.body {
                if lit.atom.pred == pred {
                    lit.negated = !lit.negated;
                }
            }
            r
        })
        .collect();
    match program.with_rules(rules) {
        Ok(p) => Ok(NegationOutcome::Transformed(p)),
        Err(DatalogError::UnsafeRule { .. }) => Ok(NegationOutcome::Skipped(SkipReason::UnsafeAfterFlip)),
        Err(DatalogError::NonStratified { .. }) => {
            Ok(NegationOutcome::Skipped(SkipReason::NonStratifiedAfterFlip))
        }
        Err(e) => Err(e),
    }
}
