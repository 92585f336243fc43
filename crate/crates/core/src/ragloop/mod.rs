//! The repair loop: prompt, call the model, apply its line edits, and keep
//! the first patch after which the target alert is gone.
//!
//! Attempt 0 carries no example. Each later attempt carries one key example,
//! walking the ranked source groups in order.

mod backend;
mod patch;
mod prompt;

use std::collections::BTreeMap;

use log::{info, warn};
use serde::Serialize;

use crate::analyzer::{alert_gone, run_analysis, AlertId, AnalysisRun};
use crate::corpus::{CorpusIndex, SourceKind};
use crate::datalog::{AlertInstance, RuleProgram};
use crate::minilang::{Codebase, Location};
use crate::retrieval::{alert_context, retrieve, KeyExample, RankedExamples, RetrievalConfig};

pub use backend::{BackendError, ChatBackend, HttpBackend, HttpSettings, MockBackend, MockRule, API_KEY_ENV};
pub use patch::{apply_patch, parse_patch, LineEdit, LinePatch, PatchError};
pub use prompt::{build_prompt, sidecar_path, system_text, PromptBundle, RuleMeta, LANGUAGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Fixed,
    Exhausted,
    Error,
}

/// The example an attempt used, without its text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleRef {
    pub predicate: String,
    pub codebase: String,
    pub source_kind: SourceKind,
    pub location: String,
    pub rank: usize,
    pub score: f64,
}

impl ExampleRef {
    fn of(e: &KeyExample) -> Self {
        ExampleRef {
            predicate: e.predicate.clone(),
            codebase: e.codebase.clone(),
            source_kind: e.source_kind,
            location: e.snippet.to_string(),
            rank: e.rank,
            score: e.score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Validation {
    pub alert_gone: bool,
    /// Alerts present only after the patch. Reported, not fatal.
    pub introduced: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attempt {
    pub index: usize,
    pub example: Option<ExampleRef>,
    pub prompt: PromptBundle,
    pub raw_response: Option<String>,
    pub backend_error: Option<String>,
    pub patch: Option<LinePatch>,
    pub parse_error: Option<String>,
    pub apply_error: Option<String>,
    pub validation: Option<Validation>,
}

impl Attempt {
    pub fn succeeded(&self) -> bool {
        self.validation.as_ref().is_some_and(|v| v.alert_gone)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepairSession {
    pub rule_id: String,
    pub target_alert: String,
    /// Source kinds in the order they were tried.
    pub source_order: Vec<SourceKind>,
    pub status: SessionStatus,
    pub attempts: Vec<Attempt>,
    pub error: Option<String>,
    /// Full text of every file the successful patch changed.
    pub patched_files: BTreeMap<String, String>,
    #[serde(skip)]
    pub patched: Option<Codebase>,
}

impl RepairSession {
    fn failed(rule_id: &str, target_alert: String, error: String) -> Self {
        RepairSession {
            rule_id: rule_id.to_string(),
            target_alert,
            source_order: Vec::new(),
            status: SessionStatus::Error,
            attempts: Vec::new(),
            error: Some(error),
            patched_files: BTreeMap::new(),
            patched: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    /// Short summary for command output.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "rule_id": self.rule_id,
            "target_alert": self.target_alert,
            "status": self.status,
            "attempts": self.attempts.len(),
            "fixed_by": self.attempts.iter().find(|a| a.succeeded()).map(|a| serde_json::json!({
                "attempt": a.index,
                "example": a.example,
            })),
            "introduced_alerts": self.attempts.last().and_then(|a| a.validation.as_ref()).map(|v| v.introduced.clone()).unwrap_or_default(),
            "patched_files": self.patched_files.keys().collect::<Vec<_>>(),
            "error": self.error,
        })
    }
}

/// Upper bound on attempts for a ranking: one plain attempt plus up to
/// `per_source` examples from each group.
pub fn attempt_budget(ranked: &RankedExamples, per_source: usize) -> usize {
    1 + ranked.groups.iter().map(|g| g.examples.len().min(per_source)).sum::<usize>()
}

/// Retrieve examples for `alert` and run the loop.
pub fn run_session(
    program: &RuleProgram,
    target: &Codebase,
    alert: &AlertInstance,
    index: &CorpusIndex,
    config: &RetrievalConfig,
    meta: &RuleMeta,
    backend: &dyn ChatBackend,
) -> RepairSession {
    let target_id = AlertId::of(alert).to_string();
    let before = match run_analysis(program, target) {
        Ok(run) => run,
        Err(e) => return RepairSession::failed(program.rule_id(), target_id, e.to_string()),
    };
    if !before.alerts.contains(alert) {
        return RepairSession::failed(
            program.rule_id(),
            target_id.clone(),
            format!("alert {target_id} is not reported on the target"),
        );
    }
    let ranked = retrieve(program, target, &before, alert, index, config);
    run_attempts(program, target, &before, alert, &ranked, meta, backend, config)
}

/// The loop proper, over an existing ranking.
#[allow(clippy::too_many_arguments)]
pub fn run_attempts(
    program: &RuleProgram,
    target: &Codebase,
    before: &AnalysisRun,
    alert: &AlertInstance,
    ranked: &RankedExamples,
    meta: &RuleMeta,
    backend: &dyn ChatBackend,
    config: &RetrievalConfig,
) -> RepairSession {
    let target_alert = AlertId::of(alert).to_string();
    let alert_at: Option<Location> = alert.locations().next().cloned();
    let context = alert_context(target, alert, config.alert_context)
        .map(|(_, _, text)| text)
        .unwrap_or_default();

    let mut plan: Vec<Option<&KeyExample>> = vec![None];
    for group in &ranked.groups {
        plan.extend(group.examples.iter().take(config.max_examples_per_source).map(Some));
    }

    let mut session = RepairSession {
        rule_id: program.rule_id().to_string(),
        target_alert,
        source_order: ranked.groups.iter().map(|g| g.kind).collect(),
        status: SessionStatus::Exhausted,
        attempts: Vec::new(),
        error: None,
        patched_files: BTreeMap::new(),
        patched: None,
    };
    for (index, example) in plan.into_iter().enumerate() {
        let prompt = build_prompt(program.rule_id(), meta, &context, example);
        let mut attempt = Attempt {
            index,
            example: example.map(ExampleRef::of),
            prompt,
            raw_response: None,
            backend_error: None,
            patch: None,
            parse_error: None,
            apply_error: None,
            validation: None,
        };
        let patched = attempt_once(&mut attempt, program, target, before, alert, alert_at.as_ref(), backend);
        let done = attempt.succeeded();
        info!(
            "attempt {index}: {}",
            if done { "alert gone" } else { "not fixed" }
        );
        session.attempts.push(attempt);
        if done {
            let patched = patched.expect("validated patch exists");
            for f in &patched.files {
                if target.file(&f.path) != Some(f) {
                    session.patched_files.insert(f.path.clone(), f.text());
                }
            }
            session.patched = Some(patched);
            session.status = SessionStatus::Fixed;
            break;
        }
    }
    session
}

fn attempt_once(
    attempt: &mut Attempt,
    program: &RuleProgram,
    target: &Codebase,
    before: &AnalysisRun,
    alert: &AlertInstance,
    alert_at: Option<&Location>,
    backend: &dyn ChatBackend,
) -> Option<Codebase> {
    let raw = match backend.complete(&attempt.prompt) {
        Ok(raw) => raw,
        Err(e) => {
            warn!("attempt {}: {e}", attempt.index);
            attempt.backend_error = Some(e.to_string());
            return None;
        }
    };
    attempt.raw_response = Some(raw.clone());
    let patch = match parse_patch(&raw) {
        Ok(p) => p,
        Err(e) => {
            attempt.parse_error = Some(e.to_string());
            return None;
        }
    };
    attempt.patch = Some(patch.clone());
    let patched = match apply_patch(target, &patch, alert_at) {
        Ok(cb) => cb,
        Err(e) => {
            attempt.apply_error = Some(e.to_string());
            return None;
        }
    };
    let after = match run_analysis(program, &patched) {
        Ok(run) => run,
        Err(e) => {
            attempt.apply_error = Some(format!("re-analysis failed: {e}"));
            return None;
        }
    };
    let diff = alert_gone(before, &after, alert).ok()?;
    if !diff.introduced.is_empty() {
        warn!("attempt {}: patch introduces {} new alert(s)", attempt.index, diff.introduced.len());
    }
    attempt.validation = Some(Validation {
        alert_gone: diff.gone,
        introduced: diff.introduced.iter().map(|a| AlertId::of(a).to_string()).collect(),
    });
    Some(patched)
}
