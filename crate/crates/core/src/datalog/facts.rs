use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::minilang::Location;

/// Parameter types of the rule language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Sym,
    Num,
    Loc,
}

impl ValueType {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueType::Sym => "sym",
            ValueType::Num => "num",
            ValueType::Loc => "loc",
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A ground constant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    Sym(String),
    Num(i64),
    Loc(Location),
}

impl Value {
    pub fn sym(s: impl Into<String>) -> Self {
        Value::Sym(s.into())
    }

    pub fn loc(file: impl Into<String>, line: u32) -> Self {
        Value::Loc(Location::new(file, line))
    }

    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Sym(_) => ValueType::Sym,
            Value::Num(_) => ValueType::Num,
            Value::Loc(_) => ValueType::Loc,
        }
    }

    pub fn as_loc(&self) -> Option<&Location> {
        match self {
            Value::Loc(l) => Some(l),
            _ => None,
        }
    }
}

/// Rule-language rendering: strings and locations quoted, numbers bare.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Sym(s) => write!(f, "{}", quote(s)),
            Value::Num(n) => write!(f, "{n}"),
            Value::Loc(l) => write!(f, "{}", quote(&l.to_string())),
        }
    }
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub type Tuple = Vec<Value>;

/// Ground facts grouped by predicate. Tuples are kept sorted and empty
/// relations are never stored, so equal sets compare and serialize equal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactSet {
    relations: BTreeMap<String, BTreeSet<Tuple>>,
}

impl FactSet {
    pub fn new() -> Self {
        FactSet::default()
    }

    pub fn insert(&mut self, pred: &str, tuple: Tuple) -> bool {
        if let Some(rel) = self.relations.get_mut(pred) {
            return rel.insert(tuple);
        }
        self.relations
            .entry(pred.to_string())
            .or_default()
            .insert(tuple)
    }

    pub fn contains(&self, pred: &str, tuple: &[Value]) -> bool {
        self.relations
            .get(pred)
            .is_some_and(|rel| rel.contains(tuple))
    }

    pub fn relation(&self, pred: &str) -> Option<&BTreeSet<Tuple>> {
        self.relations.get(pred)
    }

    pub fn tuples<'a>(&'a self, pred: &str) -> impl Iterator<Item = &'a Tuple> + 'a {
        self.relations.get(pred).into_iter().flatten()
    }

    pub fn count(&self, pred: &str) -> usize {
        self.relations.get(pred).map_or(0, BTreeSet::len)
    }

    pub fn predicates(&self) -> impl Iterator<Item = &str> {
        self.relations.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tuple)> {
        self.relations
            .iter()
            .flat_map(|(p, rel)| rel.iter().map(move |t| (p.as_str(), t)))
    }

    pub fn len(&self) -> usize {
        self.relations.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Keep only the named predicates.
    pub fn restrict<'a>(&self, preds: impl IntoIterator<Item = &'a str>) -> FactSet {
        let mut out = FactSet::new();
        for p in preds {
            if let Some(rel) = self.relations.get(p) {
                out.relations.insert(p.to_string(), rel.clone());
            }
        }
        out
    }

    pub fn extend(&mut self, other: &FactSet) {
        for (p, t) in other.iter() {
            self.insert(p, t.clone());
        }
    }

    pub(crate) fn relation_or_empty(&self, pred: &str) -> &BTreeSet<Tuple> {
        static EMPTY: BTreeSet<Tuple> = BTreeSet::new();
        self.relations.get(pred).unwrap_or(&EMPTY)
    }
}

impl fmt::Display for FactSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, t) in self.iter() {
            let args: Vec<String> = t.iter().map(Value::to_string).collect();
            writeln!(f, "{p}({}).", args.join(", "))?;
        }
        Ok(())
    }
}
