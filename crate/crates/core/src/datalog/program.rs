use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use sha2::{Digest, Sha256};

use super::facts::{Value, ValueType};
use super::syntax::{parse_items, DeclKind, Item, RawAtom, RawTerm};
use super::DatalogError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredicateRole {
    Input,
    Derived,
    Alert,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: ValueType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub role: PredicateRole,
    /// Declared in a rule file marked `.library`.
    pub library: bool,
}

impl PredicateDecl {
    pub fn loc_param_indices(&self) -> Vec<usize> {
        self.params
            .iter()
            .enumerate()
            .filter(|(_, p)| p.ty == ValueType::Loc)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Const(Value),
    Wildcard,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    pub atom: Atom,
    pub negated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Literal>,
    /// Source line of the rule, 0 when synthesised.
    pub line: u32,
}

impl Rule {
    pub fn positive(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter(|l| !l.negated).map(|l| &l.atom)
    }

    pub fn negative(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter(|l| l.negated).map(|l| &l.atom)
    }
}

/// A validated analysis rule: every predicate declared and well-typed,
/// every rule range-restricted, and the dependency graph stratifiable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleProgram {
    rule_id: String,
    decls: Vec<PredicateDecl>,
    decl_index: HashMap<String, usize>,
    rules: Vec<Rule>,
    alert: String,
    strata: Vec<Vec<String>>,
}

impl RuleProgram {
    /// Parse a self-contained rule file. `.import` is rejected here; use
    /// [`RuleProgram::load`] for files with imports.
    pub fn parse(text: &str, rule_id: &str) -> Result<Self, DatalogError> {
        Self::parse_with(text, rule_id, &mut |path| {
            Err(format!("cannot resolve import `{path}` without a file loader"))
        })
    }

    /// Load a rule file from disk; `rule_id` is the file stem. Imports are
    /// resolved relative to the importing file.
    pub fn load(path: &Path) -> Result<Self, DatalogError> {
        let rule_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("rule")
            .to_string();
        let text = std::fs::read_to_string(path).map_err(|e| DatalogError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_with(&text, &rule_id, &mut |import| {
            std::fs::read_to_string(base.join(import)).map_err(|e| format!("{import}: {e}"))
        })
    }

    pub fn parse_with(
        text: &str,
        rule_id: &str,
        loader: &mut dyn FnMut(&str) -> Result<String, String>,
    ) -> Result<Self, DatalogError> {
        let mut decls = Vec::new();
        let mut rules = Vec::new();
        let mut seen = BTreeSet::new();
        collect(text, false, loader, &mut seen, &mut decls, &mut rules)?;
        Self::build(rule_id, decls, rules)
    }

    fn build(
        rule_id: &str,
        raw_decls: Vec<(super::syntax::RawDecl, bool)>,
        raw_rules: Vec<super::syntax::RawRule>,
    ) -> Result<Self, DatalogError> {
        let mut decls = Vec::new();
        let mut decl_index = HashMap::new();
        for (d, library) in raw_decls {
            let params = d
                .params
                .iter()
                .map(|(name, ty)| {
                    let ty = match ty.as_str() {
                        "sym" => ValueType::Sym,
                        "num" => ValueType::Num,
                        "loc" => ValueType::Loc,
                        other => {
                            return Err(parse_err(d.line, format!("unknown type `{other}`")))
                        }
                    };
                    Ok(Param {
                        name: name.clone(),
                        ty,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let role = match d.kind {
                DeclKind::Input => PredicateRole::Input,
                DeclKind::Decl => PredicateRole::Derived,
                DeclKind::Alert => PredicateRole::Alert,
            };
            if decl_index.insert(d.name.clone(), decls.len()).is_some() {
                return Err(parse_err(d.line, format!("predicate `{}` declared twice", d.name)));
            }
            decls.push(PredicateDecl {
                name: d.name,
                params,
                role,
                library,
            });
        }

        let mut rules = Vec::new();
        for r in raw_rules {
            let head = type_atom(&decls, &decl_index, &r.head, r.line)?;
            let body = r
                .body
                .iter()
                .map(|(negated, a)| {
                    Ok(Literal {
                        atom: type_atom(&decls, &decl_index, a, r.line)?,
                        negated: *negated,
                    })
                })
                .collect::<Result<Vec<_>, DatalogError>>()?;
            rules.push(Rule {
                head,
                body,
                line: r.line,
            });
        }
        Self::from_parts(rule_id, decls, rules)
    }

    /// Assemble and validate a program from typed parts.
    pub fn from_parts(
        rule_id: &str,
        decls: Vec<PredicateDecl>,
        rules: Vec<Rule>,
    ) -> Result<Self, DatalogError> {
        let decl_index: HashMap<String, usize> = decls
            .iter()
            .enumerate()
            .map(|(i, d)| (d.name.clone(), i))
            .collect();
        let alerts: Vec<&PredicateDecl> = decls
            .iter()
            .filter(|d| d.role == PredicateRole::Alert)
            .collect();
        let alert = match alerts.as_slice() {
            [one] => one.name.clone(),
            [] => return Err(parse_err(0, "no `.alert` predicate declared")),
            _ => return Err(parse_err(0, "more than one `.alert` predicate declared")),
        };
        for r in &rules {
            check_rule_types(&decls, &decl_index, r)?;
        }
        for (i, r) in rules.iter().enumerate() {
            check_safety(i, r)?;
        }
        let strata = stratify(&decls, &rules)?;
        Ok(RuleProgram {
            rule_id: rule_id.to_string(),
            decls,
            decl_index,
            rules,
            alert,
            strata,
        })
    }

    pub fn rule_id(&self) -> &str {
        &self.rule_id
    }

    pub fn decls(&self) -> &[PredicateDecl] {
        &self.decls
    }

    pub fn decl(&self, name: &str) -> Option<&PredicateDecl> {
        self.decl_index.get(name).map(|&i| &self.decls[i])
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn alert_predicate(&self) -> &str {
        &self.alert
    }

    pub fn alert_decl(&self) -> &PredicateDecl {
        self.decl(&self.alert).expect("alert predicate is declared")
    }

    pub fn inputs(&self) -> impl Iterator<Item = &PredicateDecl> {
        self.decls.iter().filter(|d| d.role == PredicateRole::Input)
    }

    /// Evaluation layers. Layer 0 holds the input predicates; every later
    /// layer is one strongly connected component of derived predicates, in
    /// dependency order.
    pub fn strata(&self) -> &[Vec<String>] {
        &self.strata
    }

    pub fn is_body_predicate(&self, name: &str) -> bool {
        self.rules
            .iter()
            .any(|r| r.body.iter().any(|l| l.atom.pred == name))
    }

    /// String constants appearing in rule bodies, in first-occurrence order.
    pub fn body_string_literals(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rules {
            for l in &r.body {
                for t in &l.atom.args {
                    if let Term::Const(Value::Sym(s)) = t {
                        if !out.contains(s) {
                            out.push(s.clone());
                        }
                    }
                }
            }
        }
        out
    }

    /// Self-contained source text; re-parsing it yields an equivalent program
    /// (library markers aside).
    pub fn to_source(&self) -> String {
        self.to_string()
    }

    /// Stable digest of the program text, used as a cache key.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_source().as_bytes()))
    }

    pub(crate) fn with_rules(&self, rules: Vec<Rule>) -> Result<Self, DatalogError> {
        Self::from_parts(&self.rule_id, self.decls.clone(), rules)
    }
}

fn parse_err(line: u32, message: impl Into<String>) -> DatalogError {
    DatalogError::RuleParse {
        line,
        message: message.into(),
    }
}

fn collect(
    text: &str,
    imported: bool,
    loader: &mut dyn FnMut(&str) -> Result<String, String>,
    seen: &mut BTreeSet<String>,
    decls: &mut Vec<(super::syntax::RawDecl, bool)>,
    rules: &mut Vec<super::syntax::RawRule>,
) -> Result<(), DatalogError> {
    let items = parse_items(text)?;
    let library = imported && items.iter().any(|i| matches!(i, Item::Library));
    for item in items {
        match item {
            Item::Decl(d) => decls.push((d, library)),
            Item::Rule(r) => rules.push(r),
            Item::Library => {}
            Item::Import(path, line) => {
                if !seen.insert(path.clone()) {
                    continue;
                }
                let text = loader(&path).map_err(|m| parse_err(line, m))?;
                collect(&text, true, loader, seen, decls, rules)?;
            }
        }
    }
    Ok(())
}

fn type_atom(
    decls: &[PredicateDecl],
    index: &HashMap<String, usize>,
    atom: &RawAtom,
    line: u32,
) -> Result<Atom, DatalogError> {
    let decl = index
        .get(&atom.pred)
        .map(|&i| &decls[i])
        .ok_or_else(|| parse_err(line, format!("undeclared predicate `{}`", atom.pred)))?;
    if decl.params.len() != atom.args.len() {
        return Err(parse_err(
            line,
            format!(
                "`{}` expects {} arguments, found {}",
                atom.pred,
                decl.params.len(),
                atom.args.len()
            ),
        ));
    }
    let args = atom
        .args
        .iter()
        .zip(&decl.params)
        .map(|(t, p)| {
            Ok(match t {
                RawTerm::Var(v) => Term::Var(v.clone()),
                RawTerm::Wildcard => Term::Wildcard,
                RawTerm::Str(s) => match p.ty {
                    ValueType::Sym => Term::Const(Value::Sym(s.clone())),
                    ValueType::Loc => Term::Const(Value::Loc(
                        s.parse().map_err(|e| parse_err(line, format!("{e}")))?,
                    )),
                    ValueType::Num => {
                        return Err(parse_err(
                            line,
                            format!("string constant for num parameter `{}` of `{}`", p.name, atom.pred),
                        ))
                    }
                },
                RawTerm::Int(n) => match p.ty {
                    ValueType::Num => Term::Const(Value::Num(*n)),
                    _ => {
                        return Err(parse_err(
                            line,
                            format!("integer constant for {} parameter `{}` of `{}`", p.ty, p.name, atom.pred),
                        ))
                    }
                },
            })
        })
        .collect::<Result<Vec<_>, DatalogError>>()?;
    Ok(Atom {
        pred: atom.pred.clone(),
        args,
    })
}

fn check_rule_types(
    decls: &[PredicateDecl],
    index: &HashMap<String, usize>,
    rule: &Rule,
) -> Result<(), DatalogError> {
    let head_decl = index
        .get(&rule.head.pred)
        .map(|&i| &decls[i])
        .ok_or_else(|| parse_err(rule.line, format!("undeclared predicate `{}`", rule.head.pred)))?;
    if head_decl.role == PredicateRole::Input {
        return Err(parse_err(
            rule.line,
            format!("rule head `{}` is an input predicate", rule.head.pred),
        ));
    }
    if rule.head.args.contains(&Term::Wildcard) {
        return Err(parse_err(rule.line, "wildcard in rule head"));
    }
    let mut var_types: HashMap<&str, ValueType> = HashMap::new();
    let atoms = std::iter::once(&rule.head).chain(rule.body.iter().map(|l| &l.atom));
    for atom in atoms {
        let decl = index
            .get(&atom.pred)
            .map(|&i| &decls[i])
            .ok_or_else(|| parse_err(rule.line, format!("undeclared predicate `{}`", atom.pred)))?;
        if decl.params.len() != atom.args.len() {
            return Err(parse_err(
                rule.line,
                format!("`{}` expects {} arguments", atom.pred, decl.params.len()),
            ));
        }
        for (t, p) in atom.args.iter().zip(&decl.params) {
            match t {
                Term::Var(v) => {
                    if let Some(prev) = var_types.insert(v, p.ty) {
                        if prev != p.ty {
                            return Err(parse_err(
                                rule.line,
                                format!("variable `{v}` used as both {prev} and {}", p.ty),
                            ));
                        }
                    }
                }
                Term::Const(c) if c.value_type() != p.ty => {
                    return Err(parse_err(
                        rule.line,
                        format!("constant {c} does not match {} parameter `{}`", p.ty, p.name),
                    ))
                }
                _ => {}
            }
        }
    }
    Ok(())
}

fn check_safety(index: usize, rule: &Rule) -> Result<(), DatalogError> {
    let bound: BTreeSet<&str> = rule
        .positive()
        .flat_map(|a| a.args.iter())
        .filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            _ => None,
        })
        .collect();
    let needs = rule.head.args.iter().chain(rule.negative().flat_map(|a| a.args.iter()));
    for t in needs {
        if let Term::Var(v) = t {
            if !bound.contains(v.as_str()) {
                return Err(DatalogError::UnsafeRule {
                    rule: index,
                    variable: v.clone(),
                });
            }
        }
    }
    Ok(())
}

fn stratify(decls: &[PredicateDecl], rules: &[Rule]) -> Result<Vec<Vec<String>>, DatalogError> {
    let mut graph: DiGraph<usize, bool> = DiGraph::new();
    let nodes: Vec<NodeIndex> = (0..decls.len()).map(|i| graph.add_node(i)).collect();
    let pos: HashMap<&str, usize> = decls
        .iter()
        .enumerate()
        .map(|(i, d)| (d.name.as_str(), i))
        .collect();
    let mut edges: BTreeMap<(usize, usize), bool> = BTreeMap::new();
    for r in rules {
        let head = pos[r.head.pred.as_str()];
        for l in &r.body {
            let dep = pos[l.atom.pred.as_str()];
            *edges.entry((dep, head)).or_insert(false) |= l.negated;
        }
    }
    for (&(from, to), &neg) in &edges {
        graph.add_edge(nodes[from], nodes[to], neg);
    }

    let sccs = tarjan_scc(&graph);
    let mut comp_of = vec![0usize; decls.len()];
    for (c, members) in sccs.iter().enumerate() {
        for n in members {
            comp_of[graph[*n]] = c;
        }
    }
    for (&(from, to), &neg) in &edges {
        if neg && comp_of[from] == comp_of[to] {
            let mut cycle = vec![decls[from].name.clone()];
            cycle.extend(path_within(&edges, &comp_of, to, from).into_iter().map(|i| decls[i].name.clone()));
            return Err(DatalogError::NonStratified { cycle });
        }
    }

    // Topological order of components, ties broken by earliest declaration.
    let ncomp = sccs.len();
    let mut indeg = vec![0usize; ncomp];
    let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ncomp];
    for &(from, to) in edges.keys() {
        let (a, b) = (comp_of[from], comp_of[to]);
        if a != b && succ[a].insert(b) {
            indeg[b] += 1;
        }
    }
    let first_decl: Vec<usize> = sccs
        .iter()
        .map(|m| m.iter().map(|n| graph[*n]).min().unwrap_or(usize::MAX))
        .collect();
    let mut ready: BTreeSet<(usize, usize)> = (0..ncomp)
        .filter(|&c| indeg[c] == 0)
        .map(|c| (first_decl[c], c))
        .collect();
    let mut strata = vec![decls
        .iter()
        .filter(|d| d.role == PredicateRole::Input)
        .map(|d| d.name.clone())
        .collect::<Vec<_>>()];
    while let Some(&(key, c)) = ready.iter().next() {
        ready.remove(&(key, c));
        let mut members: Vec<usize> = sccs[c].iter().map(|n| graph[*n]).collect();
        members.sort_unstable();
        if decls[members[0]].role != PredicateRole::Input {
            strata.push(members.into_iter().map(|i| decls[i].name.clone()).collect());
        }
        for &s in &succ[c] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.insert((first_decl[s], s));
            }
        }
    }
    Ok(strata)
}

/// Shortest dependency path `from -> ... -> to` inside one component.
fn path_within(
    edges: &BTreeMap<(usize, usize), bool>,
    comp_of: &[usize],
    from: usize,
    to: usize,
) -> Vec<usize> {
    let mut prev: HashMap<usize, usize> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    let mut visited = BTreeSet::from([from]);
    while let Some(n) = queue.pop_front() {
        if n == to {
            break;
        }
        for &(a, b) in edges.keys() {
            if a == n && comp_of[b] == comp_of[from] && visited.insert(b) {
                prev.insert(b, a);
                queue.push_back(b);
            }
        }
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        match prev.get(&cur) {
            Some(&p) => {
                path.push(p);
                cur = p;
            }
            None => break,
        }
    }
    path.reverse();
    if from == to {
        path.truncate(1);
    }
    path
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => write!(f, "{c}"),
            Term::Wildcard => f.write_str("_"),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(Term::to_string).collect();
        write!(f, "{}({})", self.pred, args.join(","))
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("!")?;
        }
        write!(f, "{}", self.atom)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.body.is_empty() {
            return write!(f, "{}.", self.head);
        }
        let body: Vec<String> = self.body.iter().map(Literal::to_string).collect();
        write!(f, "{} :- {}.", self.head, body.join(", "))
    }
}

impl fmt::Display for PredicateDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kw = match self.role {
            PredicateRole::Input => ".input",
            PredicateRole::Derived => ".decl",
            PredicateRole::Alert => ".alert",
        };
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| format!("{}: {}", p.name, p.ty))
            .collect();
        write!(f, "{kw} {}({})", self.name, params.join(", "))
    }
}

impl fmt::Display for RuleProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.decls {
            writeln!(f, "{d}")?;
        }
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}
