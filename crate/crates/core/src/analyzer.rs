//! The static-analyzer boundary: extract facts from a codebase, evaluate a
//! rule program, and compare alert sets between runs.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::datalog::{alerts_of, evaluate, AlertInstance, DatalogError, FactSet, RuleProgram, Value};
use crate::minilang::{extract_facts, Codebase, CodebaseError, Location};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("loading codebase: {0}")]
    Codebase(#[from] CodebaseError),
    #[error("evaluating rule `{rule_id}` on codebase `{codebase}`: {source}")]
    Engine {
        rule_id: String,
        codebase: String,
        #[source]
        source: DatalogError,
    },
    #[error("target alert {0} is not reported by the baseline run")]
    TargetNotInBefore(String),
}

/// Result of running one rule program over one codebase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisRun {
    pub rule_id: String,
    pub codebase: String,
    pub alerts: BTreeSet<AlertInstance>,
    /// EDB plus every derived fact, kept for retrieval.
    pub facts: FactSet,
}

impl AnalysisRun {
    /// The input (EDB) part of the cached facts.
    pub fn edb(&self, program: &RuleProgram) -> FactSet {
        let inputs: Vec<&str> = program.inputs().map(|d| d.name.as_str()).collect();
        self.facts.restrict(inputs)
    }
}

/// Restrict extracted facts to the inputs `program` declares.
pub fn program_edb(program: &RuleProgram, extracted: &FactSet) -> FactSet {
    extracted.restrict(program.inputs().map(|d| d.name.as_str()))
}

pub fn run_analysis(program: &RuleProgram, codebase: &Codebase) -> Result<AnalysisRun, AnalysisError> {
    run_on_facts(program, &codebase.id, &extract_facts(codebase))
}

/// Evaluate `program` over already-extracted facts of codebase `id`.
pub fn run_on_facts(
    program: &RuleProgram,
    id: &str,
    extracted: &FactSet,
) -> Result<AnalysisRun, AnalysisError> {
    let facts = evaluate(program, &program_edb(program, extracted)).map_err(|source| {
        AnalysisError::Engine {
            rule_id: program.rule_id().to_string(),
            codebase: id.to_string(),
            source,
        }
    })?;
    Ok(AnalysisRun {
        rule_id: program.rule_id().to_string(),
        codebase: id.to_string(),
        alerts: alerts_of(program, &facts).into_iter().collect(),
        facts,
    })
}

/// Load the `.ml` tree under `dir` and analyse it.
pub fn analyze_dir(program: &RuleProgram, id: &str, dir: &Path) -> Result<(Codebase, AnalysisRun), AnalysisError> {
    let codebase = Codebase::load_dir(id, dir)?;
    let run = run_analysis(program, &codebase)?;
    Ok((codebase, run))
}

/// Outcome of comparing a run before and after a patch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlertDiff {
    pub gone: bool,
    /// Alerts present after but not before; reported as warnings.
    pub introduced: Vec<AlertInstance>,
}

/// Whether `target` disappeared between `before` and `after`.
pub fn alert_gone(
    before: &AnalysisRun,
    after: &AnalysisRun,
    target: &AlertInstance,
) -> Result<AlertDiff, AnalysisError> {
    if !before.alerts.contains(target) {
        return Err(AnalysisError::TargetNotInBefore(format!("{target:?}")));
    }
    Ok(AlertDiff {
        gone: !after.alerts.contains(target),
        introduced: after.alerts.difference(&before.alerts).cloned().collect(),
    })
}

/// Shell-friendly alert selector: `<alertPred>@<loc>[;<loc>...]`, one entry
/// per loc-typed argument in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AlertId {
    pub predicate: String,
    pub locations: Vec<Location>,
}

impl AlertId {
    pub fn of(alert: &AlertInstance) -> Self {
        AlertId {
            predicate: alert.predicate.clone(),
            locations: alert.locations().cloned().collect(),
        }
    }

    pub fn matches(&self, alert: &AlertInstance) -> bool {
        self.predicate == alert.predicate && alert.locations().eq(self.locations.iter())
    }

    /// The alerts of `run` this id selects.
    pub fn select<'a>(&self, run: &'a AnalysisRun) -> Vec<&'a AlertInstance> {
        run.alerts.iter().filter(|a| self.matches(a)).collect()
    }
}

impl fmt::Display for AlertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let locs: Vec<String> = self.locations.iter().map(Location::to_string).collect();
        write!(f, "{}@{}", self.predicate, locs.join(";"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid alert id `{0}`: expected <alertPred>@<file>:<line>[;...]")]
pub struct AlertIdParseError(pub String);

impl FromStr for AlertId {
    type Err = AlertIdParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AlertIdParseError(s.to_string());
        let (predicate, locs) = s.split_once('@').ok_or_else(bad)?;
        if predicate.is_empty() {
            return Err(bad());
        }
        let locations = if locs.is_empty() {
            Vec::new()
        } else {
            locs.split(';')
                .map(|l| l.parse().map_err(|_| bad()))
                .collect::<Result<_, _>>()?
        };
        Ok(AlertId {
            predicate: predicate.to_string(),
            locations,
        })
    }
}

/// Machine-readable alert listing used by `analyze --format json`.
#[derive(Debug, Clone, Serialize)]
pub struct AlertReport {
    pub alert_id: String,
    pub rule_id: String,
    pub locations: Vec<String>,
    pub args: Vec<String>,
}

impl AlertReport {
    pub fn of(alert: &AlertInstance) -> Self {
        AlertReport {
            alert_id: AlertId::of(alert).to_string(),
            rule_id: alert.rule_id.clone(),
            locations: alert.locations().map(Location::to_string).collect(),
            args: alert
                .args
                .iter()
                .map(|v| match v {
                    Value::Sym(s) => s.clone(),
                    other => other.to_string().trim_matches('"').to_string(),
                })
                .collect(),
        }
    }
}
