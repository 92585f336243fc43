//! EDB fact extraction.
//!
//! Each statement contributes facts located at its own line. Expression
//! occurrences get a descriptor symbol `e<file>:<line>:<col>`, except the
//! null literal which is always the shared symbol `null`.

use serde::{Deserialize, Serialize};

use super::ast::{Expr, ExprKind, Stmt, StmtKind};
use super::{Codebase, Location, SourceFile};
use crate::datalog::{FactSet, Value, ValueType};

use ValueType::{Loc, Num, Sym};

/// The fixed input schema produced by [`extract_facts`].
pub const EDB_SCHEMA: &[(&str, &[(&str, ValueType)])] = &[
    ("assignStmt", &[("v", Sym), ("e", Sym), ("l", Loc)]),
    ("varDef", &[("v", Sym), ("l", Loc)]),
    ("varUse", &[("v", Sym), ("l", Loc)]),
    ("methodCall", &[("v", Sym), ("m", Sym), ("l", Loc)]),
    ("callArgStr", &[("l", Loc), ("i", Num), ("s", Sym)]),
    ("callArgVar", &[("l", Loc), ("i", Num), ("v", Sym)]),
    ("constructorCall", &[("e", Sym)]),
    ("constructorName", &[("e", Sym), ("n", Sym)]),
    ("ctorArgVar", &[("e", Sym), ("i", Num), ("v", Sym)]),
    ("assertStmt", &[("v", Sym), ("op", Sym), ("e", Sym), ("l", Loc)]),
    ("controlFlowTo", &[("l0", Loc), ("l1", Loc)]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Null,
    Var,
    String,
    Number,
    Ctor,
    Call,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExprDescriptor {
    pub symbol: String,
    pub kind: DescriptorKind,
}

impl ExprDescriptor {
    pub fn of(file: &str, expr: &Expr) -> Self {
        let kind = match expr.kind {
            ExprKind::Null => DescriptorKind::Null,
            ExprKind::Var(_) => DescriptorKind::Var,
            ExprKind::Str(_) => DescriptorKind::String,
            ExprKind::Num(_) => DescriptorKind::Number,
            ExprKind::New { .. } => DescriptorKind::Ctor,
            ExprKind::Call { .. } => DescriptorKind::Call,
        };
        let symbol = match kind {
            DescriptorKind::Null => "null".to_string(),
            _ => format!("e{file}:{}:{}", expr.line, expr.col),
        };
        ExprDescriptor { symbol, kind }
    }
}

/// Extract the EDB facts of every file in `codebase`.
pub fn extract_facts(codebase: &Codebase) -> FactSet {
    let mut facts = FactSet::new();
    for file in &codebase.files {
        extract_file(file, &mut facts);
    }
    facts
}

pub(crate) fn extract_file(file: &SourceFile, facts: &mut FactSet) {
    let mut cx = Extractor {
        file: &file.path,
        facts,
    };
    cx.block(&file.statements, Vec::new());
}

struct Extractor<'a> {
    file: &'a str,
    facts: &'a mut FactSet,
}

impl Extractor<'_> {
    fn loc(&self, line: u32) -> Value {
        Value::Loc(Location::new(self.file, line))
    }

    fn emit(&mut self, pred: &str, tuple: Vec<Value>) {
        self.facts.insert(pred, tuple);
    }

    /// Walk a statement list whose first statement is reached from every line
    /// in `preds`. Returns the exit lines of the block (or `preds` if empty).
    fn block(&mut self, stmts: &[Stmt], mut preds: Vec<u32>) -> Vec<u32> {
        for stmt in stmts {
            for &p in &preds {
                let edge = vec![self.loc(p), self.loc(stmt.line)];
                self.emit("controlFlowTo", edge);
            }
            preds = self.stmt(stmt);
        }
        preds
    }

    fn stmt(&mut self, stmt: &Stmt) -> Vec<u32> {
        let l = self.loc(stmt.line);
        match &stmt.kind {
            StmtKind::Assign { target, value } => {
                let desc = ExprDescriptor::of(self.file, value);
                self.emit(
                    "assignStmt",
                    vec![Value::sym(target), Value::Sym(desc.symbol), l.clone()],
                );
                self.emit("varDef", vec![Value::sym(target), l.clone()]);
                self.expr(value, &l, true);
                vec![stmt.line]
            }
            StmtKind::Call {
                receiver,
                method,
                args,
            } => {
                self.call(receiver, method, args, &l, true);
                vec![stmt.line]
            }
            StmtKind::Assert { var, op, value } => {
                let desc = ExprDescriptor::of(self.file, value);
                self.emit(
                    "assertStmt",
                    vec![
                        Value::sym(var),
                        Value::sym(op.as_str()),
                        Value::Sym(desc.symbol),
                        l.clone(),
                    ],
                );
                self.emit("varUse", vec![Value::sym(var), l.clone()]);
                self.expr(value, &l, false);
                vec![stmt.line]
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.cond_uses(cond, &l);
                let mut exits = self.block(then_branch, vec![stmt.line]);
                match else_branch {
                    Some(branch) => exits.extend(self.block(branch, vec![stmt.line])),
                    None => exits.push(stmt.line),
                }
                exits.sort_unstable();
                exits.dedup();
                exits
            }
        }
    }

    /// `principal` marks the statement's own call, the only one that gets
    /// positional argument facts (they are keyed by location alone).
    fn call(&mut self, receiver: &str, method: &str, args: &[Expr], l: &Value, principal: bool) {
        self.emit(
            "methodCall",
            vec![Value::sym(receiver), Value::sym(method), l.clone()],
        );
        self.emit("varUse", vec![Value::sym(receiver), l.clone()]);
        for (i, arg) in args.iter().enumerate() {
            if principal {
                match &arg.kind {
                    ExprKind::Str(s) => {
                        self.emit("callArgStr", vec![l.clone(), Value::Num(i as i64), Value::sym(s)])
                    }
                    ExprKind::Var(v) => {
                        self.emit("callArgVar", vec![l.clone(), Value::Num(i as i64), Value::sym(v)])
                    }
                    _ => {}
                }
            }
            self.expr(arg, l, false);
        }
    }

    fn expr(&mut self, expr: &Expr, l: &Value, principal: bool) {
        match &expr.kind {
            ExprKind::Null | ExprKind::Str(_) | ExprKind::Num(_) => {}
            ExprKind::Var(v) => self.emit("varUse", vec![Value::sym(v), l.clone()]),
            ExprKind::New { class, args } => {
                let sym = ExprDescriptor::of(self.file, expr).symbol;
                self.emit("constructorCall", vec![Value::sym(&sym)]);
                self.emit("constructorName", vec![Value::sym(&sym), Value::sym(class)]);
                for (i, arg) in args.iter().enumerate() {
                    if let ExprKind::Var(v) = &arg.kind {
                        self.emit(
                            "ctorArgVar",
                            vec![Value::sym(&sym), Value::Num(i as i64), Value::sym(v)],
                        );
                    }
                    self.expr(arg, l, false);
                }
            }
            ExprKind::Call {
                receiver,
                method,
                args,
            } => self.call(receiver, method, args, l, principal),
        }
    }

    fn cond_uses(&mut self, expr: &Expr, l: &Value) {
        match &expr.kind {
            ExprKind::Var(v) => self.emit("varUse", vec![Value::sym(v), l.clone()]),
            ExprKind::Call { receiver, args, .. } => {
                self.emit("varUse", vec![Value::sym(receiver), l.clone()]);
                args.iter().for_each(|a| self.cond_uses(a, l));
            }
            ExprKind::New { args, .. } => args.iter().for_each(|a| self.cond_uses(a, l)),
            ExprKind::Null | ExprKind::Str(_) | ExprKind::Num(_) => {}
        }
    }
}
