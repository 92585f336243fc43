//! Brute-force reference for key-example identification.
//!
//! Every (predicate, corpus line) pair is checked from scratch: the program
//! is re-parsed from text, flips are done on a cloned rule list and
//! re-parsed, codebases are re-parsed, and evaluation uses the naive
//! engine. Nothing is cached between checks. Meant for tests only.

use std::collections::BTreeSet;

use crate::corpus::{IndexedCodebase, SourceKind};
use crate::datalog::{alerts_of, evaluate_naive, AlertInstance, RuleProgram};
use crate::minilang::{extract_facts, Codebase, Location};

use super::{cond3_holds, expand, KeyExample, RetrievalConfig};

#[derive(Debug, Clone)]
pub struct OracleCodebase {
    pub name: String,
    pub kind: SourceKind,
    pub priority: i64,
    pub order: usize,
    pub files: Vec<(String, String)>,
}

impl OracleCodebase {
    pub fn from_indexed(cb: &IndexedCodebase) -> Self {
        OracleCodebase {
            name: cb.name().to_string(),
            kind: cb.kind(),
            priority: cb.source.priority,
            order: cb.order,
            files: cb.codebase.texts(),
        }
    }
}

fn flip_text(program: &RuleProgram, pred: &str) -> String {
    let mut text = String::new();
    for d in program.decls() {
        text.push_str(&format!("{d}\n"));
    }
    for rule in program.rules() {
        let mut rule = rule.clone();
        for lit in &mut rule.body {
            if lit.atom.pred == pred {
                lit.negated = !lit.negated;
            }
        }
        text.push_str(&format!("{rule}\n"));
    }
    text
}

fn alerts(program: &RuleProgram, files: &[(String, String)]) -> Option<BTreeSet<AlertInstance>> {
    let cb = Codebase::from_texts("oracle", files).ok()?;
    let inputs: Vec<String> = program.inputs().map(|d| d.name.clone()).collect();
    let edb = extract_facts(&cb).restrict(inputs.iter().map(String::as_str));
    let full = evaluate_naive(program, &edb).ok()?;
    Some(alerts_of(program, &full).into_iter().collect())
}

fn matches_at(program: &RuleProgram, pred: &str, files: &[(String, String)], s: &Location) -> bool {
    let Some(decl) = program.decl(pred) else {
        return false;
    };
    let Ok(cb) = Codebase::from_texts("oracle", files) else {
        return false;
    };
    let inputs: Vec<String> = program.inputs().map(|d| d.name.clone()).collect();
    let edb = extract_facts(&cb).restrict(inputs.iter().map(String::as_str));
    let Ok(full) = evaluate_naive(program, &edb) else {
        return false;
    };
    let idx = decl.loc_param_indices();
    let hit = full.tuples(pred).any(|t| idx.iter().any(|&i| t[i].as_loc() == Some(s)));
    hit
}

pub fn oracle_key_examples(
    program: &RuleProgram,
    target_files: &[(String, String)],
    target_alert: &AlertInstance,
    corpus: &[OracleCodebase],
    config: &RetrievalConfig,
) -> Vec<KeyExample> {
    let mut out = Vec::new();
    let Ok(base) = RuleProgram::parse(&program.to_source(), program.rule_id()) else {
        return out;
    };
    let preds: Vec<String> = base
        .decls()
        .iter()
        .filter(|d| d.name != base.alert_predicate())
        .map(|d| d.name.clone())
        .collect();
    for pred in &preds {
        for cb in corpus {
            for (path, text) in &cb.files {
                let n = text.lines().count() as u32;
                for line in 1..=n {
                    let s = Location::new(path.clone(), line);
                    let base = RuleProgram::parse(&program.to_source(), program.rule_id()).expect("parsed above");
                    let decl = base.decl(pred).expect("declared");
                    if decl.loc_param_indices().is_empty() || !matches_at(&base, pred, &cb.files, &s) {
                        continue;
                    }
                    let Ok(flipped) = RuleProgram::parse(&flip_text(&base, pred), base.rule_id()) else {
                        continue;
                    };
                    match alerts(&flipped, target_files) {
                        Some(a) if !a.contains(target_alert) => {}
                        _ => continue,
                    }
                    let Some(corpus_alerts) = alerts(&flipped, &cb.files) else {
                        continue;
                    };
                    if !cond3_holds(&corpus_alerts, &s, config) {
                        continue;
                    }
                    let codebase = Codebase::from_texts(cb.name.clone(), &cb.files).expect("parsed in matches_at");
                    let Some((context_start, context_text)) = expand(&codebase, &s, config.example_context) else {
                        continue;
                    };
                    out.push(KeyExample {
                        predicate: pred.clone(),
                        codebase: cb.name.clone(),
                        source_kind: cb.kind,
                        source_priority: cb.priority,
                        source_order: cb.order,
                        snippet: s,
                        context_start,
                        context_text,
                        score: 0.0,
                        rank: 0,
                    });
                }
            }
        }
    }
    out
}
