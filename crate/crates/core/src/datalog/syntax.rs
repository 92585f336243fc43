//! Lexer and parser for rule files. Produces untyped items; typing and
//! validation happen in [`super::program`].

use super::DatalogError;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Directive(String),
    Ident(String),
    Var(String),
    Wildcard,
    Str(String),
    Int(i64),
    LParen,
    RParen,
    Comma,
    Colon,
    Turnstile,
    Bang,
    Dot,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Directive(d) => format!("`.{d}`"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Var(s) => format!("variable `{s}`"),
            Tok::Wildcard => "`_`".into(),
            Tok::Str(_) => "string constant".into(),
            Tok::Int(n) => format!("integer {n}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Turnstile => "`:-`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Dot => "`.`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: u32,
}

fn err(line: u32, message: impl Into<String>) -> DatalogError {
    DatalogError::RuleParse {
        line,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>, DatalogError> {
    let mut out = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line = idx as u32 + 1;
        let chars: Vec<char> = raw.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let mut push = |tok| out.push(Token { tok, line });
            match c {
                '#' => break,
                c if c.is_whitespace() => i += 1,
                '"' => {
                    let mut s = String::new();
                    i += 1;
                    loop {
                        match chars.get(i) {
                            None => return Err(err(line, "unterminated string constant")),
                            Some('"') => {
                                i += 1;
                                break;
                            }
                            Some('\\') => {
                                s.push(match chars.get(i + 1) {
                                    Some('n') => '\n',
                                    Some('t') => '\t',
                                    Some('"') => '"',
                                    Some('\\') => '\\',
                                    _ => return Err(err(line, "invalid escape in string constant")),
                                });
                                i += 2;
                            }
                            Some(&ch) => {
                                s.push(ch);
                                i += 1;
                            }
                        }
                    }
                    push(Tok::Str(s));
                }
                '.' if chars.get(i + 1).is_some_and(|c| c.is_ascii_alphabetic()) => {
                    let start = i + 1;
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                        i += 1;
                    }
                    push(Tok::Directive(chars[start..i].iter().collect()));
                }
                c if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) => {
                    let start = i;
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                    let digits: String = chars[start..i].iter().collect();
                    let n = digits
                        .parse()
                        .map_err(|_| err(line, format!("integer out of range: {digits}")))?;
                    push(Tok::Int(n));
                }
                c if c.is_alphabetic() || c == '_' => {
                    let start = i;
                    while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                        i += 1;
                    }
                    let word: String = chars[start..i].iter().collect();
                    let tok = if word == "_" {
                        Tok::Wildcard
                    } else if c.is_uppercase() || c == '_' {
                        Tok::Var(word)
                    } else {
                        Tok::Ident(word)
                    };
                    push(tok);
                }
                ':' if chars.get(i + 1) == Some(&'-') => {
                    push(Tok::Turnstile);
                    i += 2;
                }
                _ => {
                    let tok = match c {
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        ',' => Tok::Comma,
                        ':' => Tok::Colon,
                        '!' => Tok::Bang,
                        '.' => Tok::Dot,
                        other => return Err(err(line, format!("unexpected character `{other}`"))),
                    };
                    push(tok);
                    i += 1;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum DeclKind {
    Input,
    Decl,
    Alert,
}

#[derive(Debug, Clone)]
pub(crate) struct RawDecl {
    pub kind: DeclKind,
    pub name: String,
    pub params: Vec<(String, String)>,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum RawTerm {
    Var(String),
    Wildcard,
    Str(String),
    Int(i64),
}

#[derive(Debug, Clone)]
pub(crate) struct RawAtom {
    pub pred: String,
    pub args: Vec<RawTerm>,
}

#[derive(Debug, Clone)]
pub(crate) struct RawRule {
    pub head: RawAtom,
    pub body: Vec<(bool, RawAtom)>,
    pub line: u32,
}

#[derive(Debug, Clone)]
pub(crate) enum Item {
    Decl(RawDecl),
    Rule(RawRule),
    Import(String, u32),
    Library,
}

pub(crate) fn parse_items(text: &str) -> Result<Vec<Item>, DatalogError> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut items = Vec::new();
    while p.pos < p.tokens.len() {
        items.push(p.item()?);
    }
    Ok(items)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn line(&self) -> u32 {
        self.tokens
            .get(self.pos)
            .or(self.tokens.last())
            .map_or(1, |t| t.line)
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self) -> Result<Token, DatalogError> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| err(self.line(), "unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: Tok) -> Result<(), DatalogError> {
        let t = self.next()?;
        if t.tok != want {
            return Err(err(
                t.line,
                format!("expected {}, found {}", want.describe(), t.tok.describe()),
            ));
        }
        Ok(())
    }

    fn pred_name(&mut self) -> Result<String, DatalogError> {
        let t = self.next()?;
        match t.tok {
            Tok::Ident(s) => Ok(s),
            other => Err(err(
                t.line,
                format!("expected predicate name, found {}", other.describe()),
            )),
        }
    }

    fn item(&mut self) -> Result<Item, DatalogError> {
        let line = self.line();
        if let Some(Tok::Directive(d)) = self.peek().cloned() {
            self.pos += 1;
            let kind = match d.as_str() {
                "input" => DeclKind::Input,
                "decl" => DeclKind::Decl,
                "alert" => DeclKind::Alert,
                "library" => return Ok(Item::Library),
                "import" => {
                    let t = self.next()?;
                    return match t.tok {
                        Tok::Str(path) => Ok(Item::Import(path, line)),
                        other => Err(err(t.line, format!("expected file path, found {}", other.describe()))),
                    };
                }
                other => return Err(err(line, format!("unknown directive `.{other}`"))),
            };
            return self.decl(kind, line).map(Item::Decl);
        }
        self.rule(line).map(Item::Rule)
    }

    fn decl(&mut self, kind: DeclKind, line: u32) -> Result<RawDecl, DatalogError> {
        let name = self.pred_name()?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if self.peek() == Some(&Tok::RParen) {
            self.pos += 1;
        } else {
            loop {
                let t = self.next()?;
                let pname = match t.tok {
                    Tok::Ident(s) | Tok::Var(s) => s,
                    other => {
                        return Err(err(t.line, format!("expected parameter name, found {}", other.describe())))
                    }
                };
                self.expect(Tok::Colon)?;
                let ty = self.pred_name()?;
                params.push((pname, ty));
                let t = self.next()?;
                match t.tok {
                    Tok::Comma => continue,
                    Tok::RParen => break,
                    other => {
                        return Err(err(t.line, format!("expected `,` or `)`, found {}", other.describe())))
                    }
                }
            }
        }
        Ok(RawDecl {
            kind,
            name,
            params,
            line,
        })
    }

    fn atom(&mut self) -> Result<RawAtom, DatalogError> {
        let pred = self.pred_name()?;
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if self.peek() == Some(&Tok::RParen) {
            self.pos += 1;
            return Ok(RawAtom { pred, args });
        }
        loop {
            let t = self.next()?;
            args.push(match t.tok {
                Tok::Var(v) => RawTerm::Var(v),
                Tok::Wildcard => RawTerm::Wildcard,
                Tok::Str(s) => RawTerm::Str(s),
                Tok::Int(n) => RawTerm::Int(n),
                other => return Err(err(t.line, format!("expected term, found {}", other.describe()))),
            });
            let t = self.next()?;
            match t.tok {
                Tok::Comma => continue,
                Tok::RParen => break,
                other => return Err(err(t.line, format!("expected `,` or `)`, found {}", other.describe()))),
            }
        }
        Ok(RawAtom { pred, args })
    }

    fn rule(&mut self, line: u32) -> Result<RawRule, DatalogError> {
        let head = self.atom()?;
        let mut body = Vec::new();
        let t = self.next()?;
        match t.tok {
            Tok::Dot => {}
            Tok::Turnstile => loop {
                let negated = self.peek() == Some(&Tok::Bang);
                if negated {
                    self.pos += 1;
                }
                body.push((negated, self.atom()?));
                let t = self.next()?;
                match t.tok {
                    Tok::Comma => continue,
                    Tok::Dot => break,
                    other => {
                        return Err(err(t.line, format!("expected `,` or `.`, found {}", other.describe())))
                    }
                }
            },
            other => return Err(err(t.line, format!("expected `:-` or `.`, found {}", other.describe()))),
        }
        Ok(RawRule { head, body, line })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_directives_and_rules() {
        let items = parse_items(
            ".input e(a: sym, l: loc)  # edges\n.alert bad(l: loc)\nbad(L) :- e(_, L), !e(\"x\", L).\n",
        )
        .unwrap();
        assert_eq!(items.len(), 3);
        match &items[2] {
            Item::Rule(r) => {
                assert_eq!(r.head.pred, "bad");
                assert_eq!(r.body.len(), 2);
                assert!(r.body[1].0);
                assert_eq!(r.body[1].1.args[0], RawTerm::Str("x".into()));
                assert_eq!(r.line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rules_may_span_lines() {
        let items = parse_items("p(X) :-\n  q(X),\n  r(X, -3).").unwrap();
        match &items[0] {
            Item::Rule(r) => assert_eq!(r.body[1].1.args[1], RawTerm::Int(-3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reports_line_of_error() {
        match parse_items("p(X) :- q(X).\np(X) :- q(X)\n") {
            Err(DatalogError::RuleParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_items(".bogus p()").is_err());
        assert!(parse_items("p(x).").is_err());
    }
}
