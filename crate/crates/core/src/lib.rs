//! Repair static-analysis alerts with key examples.
//!
//! A Datalog analysis rule is run over a MiniLang codebase. For a reported
//! alert, predicates of the rule that can dismiss it when negated
//! ("bridging predicates") are used to find snippets in a clean corpus that
//! demonstrate the missing ingredient. Those snippets feed an LLM repair loop
//! whose patches are validated by re-running the analysis.

pub mod analyzer;
pub mod cli;
pub mod corpus;
pub mod datalog;
pub mod minilang;
pub mod ragloop;
pub mod retrieval;
