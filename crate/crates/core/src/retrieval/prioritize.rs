//! Filtering, ranking and truncation of key examples.

use std::collections::{BTreeMap, HashMap};

use globset::{Glob, GlobSet, GlobSetBuilder};
use log::{debug, warn};
use serde::Serialize;

use crate::corpus::SourceKind;
use crate::datalog::RuleProgram;

use super::{bm25_rank, KeyExample, RetrievalConfig};

/// Examples from one source kind, best first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceGroup {
    pub kind: SourceKind,
    pub examples: Vec<KeyExample>,
}

/// Prioritized examples grouped by source kind, highest-priority group first.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RankedExamples {
    pub groups: Vec<SourceGroup>,
}

impl RankedExamples {
    pub fn flatten(&self) -> Vec<&KeyExample> {
        self.groups.iter().flat_map(|g| &g.examples).collect()
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.examples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn library_globs(patterns: &[String]) -> GlobSet {
    let mut builder = GlobSetBuilder::new();
    for p in patterns {
        match Glob::new(p) {
            Ok(g) => {
                builder.add(g);
            }
            Err(e) => warn!("ignoring library glob `{p}`: {e}"),
        }
    }
    builder.build().unwrap_or_else(|_| GlobSet::empty())
}

/// Drop library code and over-general predicates, rank by BM-25 against the
/// alert context, then keep the best `max_examples_per_source` per kind.
pub fn prioritize(
    examples: Vec<KeyExample>,
    alert_context: &str,
    program: &RuleProgram,
    config: &RetrievalConfig,
) -> RankedExamples {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for e in &examples {
        *counts.entry(e.predicate.clone()).or_default() += 1;
    }
    let globs = library_globs(&config.library_globs);
    let kept: Vec<KeyExample> = examples
        .into_iter()
        .filter(|e| {
            let library = globs.is_match(&e.snippet.file)
                || program.decl(&e.predicate).is_some_and(|d| d.library);
            if library {
                debug!("dropping library example {} ({})", e.snippet, e.predicate);
            }
            !library
        })
        .filter(|e| {
            let n = counts[&e.predicate];
            if n > config.max_predicate_matches {
                debug!("dropping {} ({}): predicate has {n} examples", e.snippet, e.predicate);
                return false;
            }
            true
        })
        .collect();

    let ranked = bm25_rank(alert_context, kept);
    let mut by_kind: BTreeMap<SourceKind, (i64, usize, Vec<KeyExample>)> = BTreeMap::new();
    for e in ranked {
        let entry = by_kind
            .entry(e.source_kind)
            .or_insert((e.source_priority, e.source_order, Vec::new()));
        entry.0 = entry.0.min(e.source_priority);
        if (e.source_priority, e.source_order) < (entry.0, entry.1) {
            entry.1 = e.source_order;
        }
        entry.2.push(e);
    }
    let mut groups: Vec<(i64, usize, SourceGroup)> = by_kind
        .into_iter()
        .map(|(kind, (priority, order, mut examples))| {
            examples.truncate(config.max_examples_per_source);
            for (i, e) in examples.iter_mut().enumerate() {
                e.rank = i + 1;
            }
            (priority, order, SourceGroup { kind, examples })
        })
        .collect();
    groups.sort_by_key(|(p, o, _)| (*p, *o));
    RankedExamples {
        groups: groups.into_iter().map(|(_, _, g)| g).collect(),
    }
}
