//! Reference evaluator: recomputes every rule against the whole database
//! until nothing changes. It walks the rule AST directly with name-keyed
//! substitutions and shares no join code with the semi-naive engine, so the
//! two can check each other.

use std::collections::BTreeMap;

use super::eval::check_edb;
use super::facts::{FactSet, Tuple, Value};
use super::program::{Atom, Rule, RuleProgram, Term};
use super::DatalogError;

type Subst = BTreeMap<String, Value>;

pub fn evaluate_naive(program: &RuleProgram, edb: &FactSet) -> Result<FactSet, DatalogError> {
    check_edb(program, edb)?;
    let mut db = edb.clone();
    for stratum in program.strata().iter().skip(1) {
        let rules: Vec<&Rule> = program
            .rules()
            .iter()
            .filter(|r| stratum.contains(&r.head.pred))
            .collect();
        loop {
            let mut derived = Vec::new();
            for rule in &rules {
                for s in solutions(rule, &db) {
                    derived.push((rule.head.pred.clone(), ground(&rule.head, &s)));
                }
            }
            let mut changed = false;
            for (pred, tuple) in derived {
                changed |= db.insert(&pred, tuple);
            }
            if !changed {
                break;
            }
        }
    }
    Ok(db)
}

fn solutions(rule: &Rule, db: &FactSet) -> Vec<Subst> {
    let mut substs = vec![Subst::new()];
    for atom in rule.positive() {
        let mut next = Vec::new();
        for s in &substs {
            for tuple in db.tuples(&atom.pred) {
                if let Some(ext) = matches(atom, tuple, s) {
                    next.push(ext);
                }
            }
        }
        substs = next;
    }
    substs
        .into_iter()
        .filter(|s| {
            rule.negative()
                .all(|atom| !db.tuples(&atom.pred).any(|t| matches(atom, t, s).is_some()))
        })
        .collect()
}

fn matches(atom: &Atom, tuple: &Tuple, subst: &Subst) -> Option<Subst> {
    let mut out = subst.clone();
    for (term, value) in atom.args.iter().zip(tuple) {
        match term {
            Term::Wildcard => {}
            Term::Const(c) => {
                if c != value {
                    return None;
                }
            }
            Term::Var(v) => match out.get(v) {
                Some(b) if b != value => return None,
                Some(_) => {}
                None => {
                    out.insert(v.clone(), value.clone());
                }
            },
        }
    }
    Some(out)
}

fn ground(atom: &Atom, subst: &Subst) -> Tuple {
    atom.args
        .iter()
        .map(|t| match t {
            Term::Var(v) => subst[v].clone(),
            Term::Const(c) => c.clone(),
            Term::Wildcard => unreachable!("wildcards are rejected in heads"),
        })
        .collect()
}
