//! Key-example retrieval through bridging predicates.
//!
//! A predicate `p` of the rule bridges an alert to a corpus snippet `s` when
//!
//! 1. `p` has a location parameter, and some fact of `p` points at `s`;
//! 2. negating `p` in the rule makes the alert disappear from the target;
//! 3. negating `p` makes a new alert of the same rule appear in the (clean)
//!    codebase that contains `s`.
//!
//! Conditions are checked in that order: the first needs only the
//! declarations, the second one re-analysis of the target, and only the
//! survivors pay for the per-corpus-codebase third check.

mod bm25;
mod oracle;
mod prioritize;

use std::collections::BTreeSet;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::analyzer::{run_on_facts, AnalysisRun};
use crate::corpus::{CorpusIndex, IndexedCodebase, SourceKind};
use crate::datalog::{negate_predicate, AlertInstance, DatalogError, NegationOutcome, RuleProgram};
use crate::minilang::{extract_facts, Codebase, Location};

pub use bm25::{bm25_rank, bm25_scores, tokenize, BM25_B, BM25_K1};
pub use oracle::{oracle_key_examples, OracleCodebase};
pub use prioritize::{prioritize, RankedExamples, SourceGroup};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Lines of context on each side of a key example.
    pub example_context: u32,
    /// Lines of context on each side of the alert location.
    pub alert_context: u32,
    /// Predicates with more key examples than this are dropped.
    pub max_predicate_matches: usize,
    pub max_examples_per_source: usize,
    /// Path globs (relative to the codebase root) treated as library code.
    pub library_globs: Vec<String>,
    /// Require the new alert of condition 3 to be in the snippet's file.
    pub same_file_cond3: bool,
    pub literal_top_k: usize,
    pub literal_min_len: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            example_context: 3,
            alert_context: 10,
            max_predicate_matches: 20,
            max_examples_per_source: 4,
            library_globs: Vec::new(),
            same_file_cond3: false,
            literal_top_k: 3,
            literal_min_len: 5,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_predicate_matches == 0 || self.max_examples_per_source == 0 || self.literal_top_k == 0 {
            return Err("retrieval counts must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgingPredicate {
    pub name: String,
    pub loc_param_indices: Vec<usize>,
    pub negated_program: RuleProgram,
}

/// A corpus snippet matched by a bridging predicate, expanded with context.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyExample {
    pub predicate: String,
    pub codebase: String,
    pub source_kind: SourceKind,
    pub source_priority: i64,
    pub source_order: usize,
    pub snippet: Location,
    pub context_start: u32,
    pub context_text: String,
    pub score: f64,
    /// 1-based rank within its source group; 0 until prioritized.
    pub rank: usize,
}

impl KeyExample {
    /// Identity used for set comparisons: (predicate, codebase, snippet).
    pub fn key(&self) -> (String, String, Location) {
        (self.predicate.clone(), self.codebase.clone(), self.snippet.clone())
    }
}

pub fn example_keys(examples: &[KeyExample]) -> BTreeSet<(String, String, Location)> {
    examples.iter().map(KeyExample::key).collect()
}

/// Candidate bridging predicates: every declared predicate except the alert.
pub fn get_predicates(program: &RuleProgram) -> Vec<String> {
    program
        .decls()
        .iter()
        .filter(|d| d.name != program.alert_predicate())
        .map(|d| d.name.clone())
        .collect()
}

pub fn check_cond1(program: &RuleProgram, pred: &str) -> Result<bool, DatalogError> {
    let decl = program
        .decl(pred)
        .ok_or_else(|| DatalogError::UnknownPredicate(pred.to_string()))?;
    Ok(!decl.loc_param_indices().is_empty())
}

#[derive(Debug, Clone)]
pub struct Cond2 {
    pub holds: bool,
    pub negation: NegationOutcome,
}

/// Negate `pred` and re-analyse the target; holds iff `target_alert` is gone.
/// Skipped flips and evaluation failures count as "does not hold".
pub fn check_cond2(
    program: &RuleProgram,
    pred: &str,
    target_run: &AnalysisRun,
    target_alert: &AlertInstance,
) -> Result<Cond2, DatalogError> {
    let negation = negate_predicate(program, pred)?;
    let holds = match &negation {
        NegationOutcome::Skipped(reason) => {
            debug!("condition 2 for `{pred}`: skipped ({reason})");
            false
        }
        NegationOutcome::Transformed(negated) => match run_on_facts(negated, &target_run.codebase, &target_run.edb(program)) {
            Ok(run) => !run.alerts.contains(target_alert),
            Err(e) => {
                warn!("condition 2 for `{pred}`: analysis failed, skipping: {e}");
                false
            }
        },
    };
    Ok(Cond2 { holds, negation })
}

/// Snippet locations a predicate matches: every loc-typed argument of every
/// fact of `pred`, deduplicated and sorted.
pub fn get_matches(program: &RuleProgram, codebase_run: &AnalysisRun, pred: &str) -> Vec<Location> {
    let Some(decl) = program.decl(pred) else {
        return Vec::new();
    };
    let idx = decl.loc_param_indices();
    let set: BTreeSet<Location> = codebase_run
        .facts
        .tuples(pred)
        .flat_map(|t| idx.iter().filter_map(move |&i| t.get(i).and_then(|v| v.as_loc()).cloned()))
        .collect();
    set.into_iter().collect()
}

/// Condition 3 for one snippet: the negated program reports some alert on
/// the codebase (in the snippet's file when `same_file_cond3` is set).
pub fn check_cond3(negated: &RuleProgram, codebase: &Codebase, snippet: &Location, config: &RetrievalConfig) -> bool {
    match run_on_facts(negated, &codebase.id, &extract_facts(codebase)) {
        Ok(run) => cond3_holds(&run.alerts, snippet, config),
        Err(e) => {
            warn!("condition 3 on `{}`: analysis failed, skipping: {e}", codebase.id);
            false
        }
    }
}

pub(crate) fn cond3_holds<'a>(
    alerts: impl IntoIterator<Item = &'a AlertInstance>,
    snippet: &Location,
    config: &RetrievalConfig,
) -> bool {
    let mut alerts = alerts.into_iter().peekable();
    if !config.same_file_cond3 {
        return alerts.peek().is_some();
    }
    alerts.any(|a| a.locations().any(|l| l.file == snippet.file))
}

pub(crate) fn expand(
    cb: &Codebase,
    snippet: &Location,
    radius: u32,
) -> Option<(u32, String)> {
    let file = cb.file(&snippet.file)?;
    file.line(snippet.line)?;
    Some(file.window(snippet.line, radius))
}

/// The bridging predicates for `target_alert`: conditions 1 and 2.
pub fn bridging_predicates(
    program: &RuleProgram,
    target_run: &AnalysisRun,
    target_alert: &AlertInstance,
) -> Vec<BridgingPredicate> {
    let mut out = Vec::new();
    for name in get_predicates(program) {
        let decl = program.decl(&name).expect("listed predicates are declared");
        let loc_param_indices = decl.loc_param_indices();
        if loc_param_indices.is_empty() {
            continue;
        }
        let cond2 = match check_cond2(program, &name, target_run, target_alert) {
            Ok(c) => c,
            Err(e) => {
                warn!("condition 2 for `{name}`: {e}");
                continue;
            }
        };
        if let (true, NegationOutcome::Transformed(negated_program)) = (cond2.holds, cond2.negation) {
            out.push(BridgingPredicate {
                name,
                loc_param_indices,
                negated_program,
            });
        }
    }
    out
}

/// Identify key examples for `target_alert` in the clean codebases.
pub fn identify_key_examples(
    program: &RuleProgram,
    target_run: &AnalysisRun,
    target_alert: &AlertInstance,
    clean_codebases: &[&IndexedCodebase],
    config: &RetrievalConfig,
) -> Vec<KeyExample> {
    let bridges = bridging_predicates(program, target_run, target_alert);
    debug!(
        "bridging predicates: [{}]",
        bridges.iter().map(|b| b.name.as_str()).collect::<Vec<_>>().join(", ")
    );
    let mut out = Vec::new();
    if bridges.is_empty() {
        return out;
    }
    for cb in clean_codebases {
        let original = match run_on_facts(program, cb.name(), &cb.facts) {
            Ok(run) => run,
            Err(e) => {
                warn!("corpus codebase `{}`: {e}; skipping", cb.name());
                continue;
            }
        };
        for bridge in &bridges {
            let matches = get_matches(program, &original, &bridge.name);
            if matches.is_empty() {
                continue;
            }
            let negated = match run_on_facts(&bridge.negated_program, cb.name(), &cb.facts) {
                Ok(run) => run,
                Err(e) => {
                    warn!("condition 3 for `{}` on `{}`: {e}; skipping", bridge.name, cb.name());
                    continue;
                }
            };
            for snippet in matches {
                if !cond3_holds(&negated.alerts, &snippet, config) {
                    continue;
                }
                let Some((context_start, context_text)) = expand(&cb.codebase, &snippet, config.example_context) else {
                    continue;
                };
                out.push(KeyExample {
                    predicate: bridge.name.clone(),
                    codebase: cb.name().to_string(),
                    source_kind: cb.kind(),
                    source_priority: cb.source.priority,
                    source_order: cb.order,
                    snippet,
                    context_start,
                    context_text,
                    score: 0.0,
                    rank: 0,
                });
            }
        }
    }
    out
}

/// Clean codebases eligible for retrieval. `literal` sources only take part
/// when they rank among the top literal-matching sources.
pub fn candidate_codebases<'a>(
    index: &'a CorpusIndex,
    program: &RuleProgram,
    config: &RetrievalConfig,
) -> Vec<&'a IndexedCodebase> {
    let literal: BTreeSet<&str> = index
        .literal_rank(program, config.literal_top_k, config.literal_min_len)
        .into_iter()
        .map(|c| c.name())
        .collect();
    index
        .clean_codebases(program)
        .into_iter()
        .filter(|c| c.kind() != SourceKind::Literal || literal.contains(c.name()))
        .collect()
}

/// The alert's code context: the lines around its first location.
pub fn alert_context(target: &Codebase, alert: &AlertInstance, radius: u32) -> Option<(Location, u32, String)> {
    let loc = alert.locations().next()?.clone();
    let (start, text) = expand(target, &loc, radius)?;
    Some((loc, start, text))
}

/// The full pipeline for one alert: candidate codebases, key examples,
/// then prioritization against the alert context.
pub fn retrieve(
    program: &RuleProgram,
    target: &Codebase,
    target_run: &AnalysisRun,
    target_alert: &AlertInstance,
    index: &CorpusIndex,
    config: &RetrievalConfig,
) -> RankedExamples {
    let candidates = candidate_codebases(index, program, config);
    let examples = identify_key_examples(program, target_run, target_alert, &candidates, config);
    let context = alert_context(target, target_alert, config.alert_context)
        .map(|(_, _, text)| text)
        .unwrap_or_default();
    prioritize(examples, &context, program, config)
}
