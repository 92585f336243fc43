use std::collections::HashSet;

use super::ast::{CmpOp, Expr, ExprKind, Stmt, StmtKind};
use super::lexer::{Tok, Token};

type PResult<T> = Result<T, (u32, String)>;

pub(super) fn parse(tokens: &[Token]) -> PResult<Vec<Stmt>> {
    let mut p = Parser {
        tokens,
        pos: 0,
        stmt_lines: HashSet::new(),
    };
    let stmts = p.block_body()?;
    if let Some(t) = p.peek() {
        return Err((t.line, format!("unexpected {}", t.tok.describe())));
    }
    Ok(stmts)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    stmt_lines: HashSet<u32>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn last_line(&self) -> u32 {
        self.tokens.last().map_or(1, |t| t.line)
    }

    fn next(&mut self) -> PResult<&'a Token> {
        let t = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| (self.last_line(), "unexpected end of input".to_string()))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: Tok) -> PResult<&'a Token> {
        let t = self.next()?;
        if t.tok != want {
            return Err((
                t.line,
                format!("expected {}, found {}", want.describe(), t.tok.describe()),
            ));
        }
        Ok(t)
    }

    fn ident(&mut self) -> PResult<(String, &'a Token)> {
        let t = self.next()?;
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t)),
            other => Err((t.line, format!("expected identifier, found {}", other.describe()))),
        }
    }

    /// All tokens consumed since `start` must sit on `line`.
    fn same_line(&self, start: usize, line: u32) -> PResult<()> {
        match self.tokens[start..self.pos].iter().find(|t| t.line != line) {
            Some(t) => Err((t.line, "statement must fit on a single line".into())),
            None => Ok(()),
        }
    }

    fn block_body(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        while let Some(t) = self.peek() {
            if t.tok == Tok::RBrace {
                break;
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn braced_block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(Tok::LBrace)?;
        let body = self.block_body()?;
        self.expect(Tok::RBrace)?;
        Ok(body)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let start = self.pos;
        let first = self.next()?;
        let line = first.line;
        if !self.stmt_lines.insert(line) {
            return Err((line, "only one statement per line is allowed".into()));
        }
        let kind = match &first.tok {
            Tok::Ident(name) => {
                let t = self.next()?;
                let kind = match t.tok {
                    Tok::Assign => {
                        if self.peek().map(|t| &t.tok) == Some(&Tok::Semi) {
                            return Err((line, "missing expression after `=`".into()));
                        }
                        let value = self.expr()?;
                        StmtKind::Assign {
                            target: name.clone(),
                            value,
                        }
                    }
                    Tok::Dot => {
                        let (method, _) = self.ident()?;
                        let args = self.call_args()?;
                        StmtKind::Call {
                            receiver: name.clone(),
                            method,
                            args,
                        }
                    }
                    ref other => {
                        return Err((line, format!("expected `=` or `.`, found {}", other.describe())))
                    }
                };
                self.expect(Tok::Semi)?;
                self.same_line(start, line)?;
                kind
            }
            Tok::Assert => {
                let (var, _) = self.ident()?;
                let t = self.next()?;
                let op = match t.tok {
                    Tok::NotEq => CmpOp::Ne,
                    Tok::EqEq => CmpOp::Eq,
                    ref other => {
                        return Err((line, format!("expected `!=` or `==`, found {}", other.describe())))
                    }
                };
                let value = self.expr()?;
                self.expect(Tok::Semi)?;
                self.same_line(start, line)?;
                StmtKind::Assert { var, op, value }
            }
            Tok::If => {
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                self.same_line(start, line)?;
                let then_branch = self.braced_block()?;
                let else_branch = if self.peek().map(|t| &t.tok) == Some(&Tok::Else) {
                    self.pos += 1;
                    Some(self.braced_block()?)
                } else {
                    None
                };
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                }
            }
            other => return Err((line, format!("unexpected {}", other.describe()))),
        };
        Ok(Stmt { line, kind })
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if self.peek().map(|t| &t.tok) == Some(&Tok::RParen) {
            self.pos += 1;
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            let t = self.next()?;
            match t.tok {
                Tok::Comma => continue,
                Tok::RParen => break,
                ref other => {
                    return Err((t.line, format!("expected `,` or `)`, found {}", other.describe())))
                }
            }
        }
        Ok(args)
    }

    fn expr(&mut self) -> PResult<Expr> {
        let t = self.next()?;
        let (line, col) = (t.line, t.col);
        let kind = match &t.tok {
            Tok::Null => ExprKind::Null,
            Tok::Str(s) => ExprKind::Str(s.clone()),
            Tok::Num(n) => ExprKind::Num(*n),
            Tok::New => {
                let (class, _) = self.ident()?;
                let args = self.call_args()?;
                ExprKind::New { class, args }
            }
            Tok::Ident(name) => {
                if self.peek().map(|t| &t.tok) == Some(&Tok::Dot) {
                    self.pos += 1;
                    let (method, _) = self.ident()?;
                    let args = self.call_args()?;
                    ExprKind::Call {
                        receiver: name.clone(),
                        method,
                        args,
                    }
                } else {
                    ExprKind::Var(name.clone())
                }
            }
            other => return Err((line, format!("expected expression, found {}", other.describe()))),
        };
        Ok(Expr { kind, line, col })
    }
}
