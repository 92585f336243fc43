//! Semi-naive bottom-up evaluation, one strongly connected component at a time.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::facts::{FactSet, Tuple, Value};
use super::program::{RuleProgram, Term};
use super::DatalogError;

#[derive(Debug, Clone)]
enum Slot {
    Var(usize),
    Const(Value),
    Any,
}

#[derive(Debug, Clone)]
struct CompiledAtom {
    pred: String,
    slots: Vec<Slot>,
}

#[derive(Debug, Clone)]
struct CompiledRule {
    head: CompiledAtom,
    positive: Vec<CompiledAtom>,
    negative: Vec<CompiledAtom>,
    nvars: usize,
}

fn compile_atom(atom: &super::program::Atom, vars: &mut HashMap<String, usize>) -> CompiledAtom {
    let slots = atom
        .args
        .iter()
        .map(|t| match t {
            Term::Var(v) => {
                let next = vars.len();
                Slot::Var(*vars.entry(v.clone()).or_insert(next))
            }
            Term::Const(c) => Slot::Const(c.clone()),
            Term::Wildcard => Slot::Any,
        })
        .collect();
    CompiledAtom {
        pred: atom.pred.clone(),
        slots,
    }
}

fn compile(rule: &super::program::Rule) -> CompiledRule {
    let mut vars = HashMap::new();
    // Positive literals first so every variable gets bound before use.
    let positive: Vec<_> = rule.positive().map(|a| compile_atom(a, &mut vars)).collect();
    let negative: Vec<_> = rule.negative().map(|a| compile_atom(a, &mut vars)).collect();
    let head = compile_atom(&rule.head, &mut vars);
    CompiledRule {
        head,
        positive,
        negative,
        nvars: vars.len(),
    }
}

/// Check that `edb` only holds well-typed facts of declared input predicates.
pub(crate) fn check_edb(program: &RuleProgram, edb: &FactSet) -> Result<(), DatalogError> {
    for pred in edb.predicates() {
        let decl = program
            .decl(pred)
            .filter(|d| d.role == super::PredicateRole::Input)
            .ok_or_else(|| DatalogError::TypeMismatch {
                predicate: pred.to_string(),
                message: "facts supplied for a predicate that is not a declared input".into(),
            })?;
        for t in edb.tuples(pred) {
            if t.len() != decl.params.len() {
                return Err(DatalogError::TypeMismatch {
                    predicate: pred.to_string(),
                    message: format!("expected {} arguments, found {}", decl.params.len(), t.len()),
                });
            }
            if let Some((v, p)) = t.iter().zip(&decl.params).find(|(v, p)| v.value_type() != p.ty) {
                return Err(DatalogError::TypeMismatch {
                    predicate: pred.to_string(),
                    message: format!("value {v} does not match {} parameter `{}`", p.ty, p.name),
                });
            }
        }
    }
    Ok(())
}

/// Least model of `program` over `edb` (EDB and IDB together).
pub fn evaluate(program: &RuleProgram, edb: &FactSet) -> Result<FactSet, DatalogError> {
    check_edb(program, edb)?;
    let mut db = edb.clone();
    for stratum in program.strata().iter().skip(1) {
        let members: HashSet<&str> = stratum.iter().map(String::as_str).collect();
        let rules: Vec<CompiledRule> = program
            .rules()
            .iter()
            .filter(|r| members.contains(r.head.pred.as_str()))
            .map(compile)
            .collect();

        let mut delta = FactSet::new();
        for rule in &rules {
            for t in fire(rule, &db, None) {
                if !db.contains(&rule.head.pred, &t) {
                    delta.insert(&rule.head.pred, t);
                }
            }
        }
        while !delta.is_empty() {
            db.extend(&delta);
            let mut next = FactSet::new();
            for rule in &rules {
                for (i, atom) in rule.positive.iter().enumerate() {
                    if !members.contains(atom.pred.as_str()) || delta.count(&atom.pred) == 0 {
                        continue;
                    }
                    for t in fire(rule, &db, Some((i, delta.relation_or_empty(&atom.pred)))) {
                        if !db.contains(&rule.head.pred, &t) {
                            next.insert(&rule.head.pred, t);
                        }
                    }
                }
            }
            delta = next;
        }
    }
    Ok(db)
}

/// All head tuples derivable by one application of `rule`. When `delta` is
/// given, positive literal `i` draws from it instead of the full relation.
fn fire(rule: &CompiledRule, db: &FactSet, delta: Option<(usize, &BTreeSet<Tuple>)>) -> Vec<Tuple> {
    let mut out = Vec::new();
    let mut binding: Vec<Option<Value>> = vec![None; rule.nvars];
    join(rule, 0, db, delta, &mut binding, &mut out);
    out
}

fn join(
    rule: &CompiledRule,
    idx: usize,
    db: &FactSet,
    delta: Option<(usize, &BTreeSet<Tuple>)>,
    binding: &mut Vec<Option<Value>>,
    out: &mut Vec<Tuple>,
) {
    if idx == rule.positive.len() {
        if rule.negative.iter().any(|a| exists(a, db, binding)) {
            return;
        }
        let head = rule
            .head
            .slots
            .iter()
            .map(|s| match s {
                Slot::Var(v) => binding[*v].clone().expect("safe rule binds head variables"),
                Slot::Const(c) => c.clone(),
                Slot::Any => unreachable!("wildcards are rejected in heads"),
            })
            .collect();
        out.push(head);
        return;
    }
    let atom = &rule.positive[idx];
    let source = match delta {
        Some((i, d)) if i == idx => d,
        _ => db.relation_or_empty(&atom.pred),
    };
    let mut newly = Vec::with_capacity(atom.slots.len());
    for tuple in source {
        newly.clear();
        if unify(&atom.slots, tuple, binding, &mut newly) {
            join(rule, idx + 1, db, delta, binding, out);
        }
        for &v in &newly {
            binding[v] = None;
        }
    }
}

fn unify(slots: &[Slot], tuple: &[Value], binding: &mut [Option<Value>], newly: &mut Vec<usize>) -> bool {
    for (slot, value) in slots.iter().zip(tuple) {
        match slot {
            Slot::Any => {}
            Slot::Const(c) => {
                if c != value {
                    return false;
                }
            }
            Slot::Var(v) => match &binding[*v] {
                Some(b) if b != value => return false,
                Some(_) => {}
                None => {
                    binding[*v] = Some(value.clone());
                    newly.push(*v);
                }
            },
        }
    }
    true
}

fn exists(atom: &CompiledAtom, db: &FactSet, binding: &[Option<Value>]) -> bool {
    db.tuples(&atom.pred).any(|tuple| {
        atom.slots.iter().zip(tuple).all(|(slot, value)| match slot {
            Slot::Any => true,
            Slot::Const(c) => c == value,
            Slot::Var(v) => binding[*v].as_ref() == Some(value),
        })
    })
}
