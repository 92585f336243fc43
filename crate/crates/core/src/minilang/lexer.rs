#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) enum Tok {
    Ident(String),
    Str(String),
    Num(i64),
    Null,
    New,
    Assert,
    If,
    Else,
    Assign,
    EqEq,
    NotEq,
    Semi,
    Dot,
    LParen,
    RParen,
    Comma,
    LBrace,
    RBrace,
}

impl Tok {
    pub(super) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Num(n) => format!("number {n}"),
            Tok::Null => "`null`".into(),
            Tok::New => "`new`".into(),
            Tok::Assert => "`assert`".into(),
            Tok::If => "`if`".into(),
            Tok::Else => "`else`".into(),
            Tok::Assign => "`=`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::NotEq => "`!=`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Dot => "`.`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(super) struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

pub(super) fn lex(text: &str) -> Result<Vec<Token>, (u32, String)> {
    let mut out = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line = idx as u32 + 1;
        lex_line(raw, line, &mut out)?;
    }
    Ok(out)
}

fn lex_line(raw: &str, line: u32, out: &mut Vec<Token>) -> Result<(), (u32, String)> {
    let chars: Vec<char> = raw.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i as u32 + 1;
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line, col });
        match c {
            '#' => break,
            c if c.is_whitespace() => i += 1,
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err((line, "unterminated string literal".into())),
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => {
                            let esc = chars
                                .get(i + 1)
                                .ok_or((line, "unterminated escape".to_string()))?;
                            s.push(match esc {
                                'n' => '\n',
                                't' => '\t',
                                '"' => '"',
                                '\\' => '\\',
                                other => return Err((line, format!("unknown escape `\\{other}`"))),
                            });
                            i += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                push(out, Tok::Str(s));
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().collect();
                let n = digits
                    .parse()
                    .map_err(|_| (line, format!("number out of range: {digits}")))?;
                push(out, Tok::Num(n));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let tok = match word.as_str() {
                    "null" => Tok::Null,
                    "new" => Tok::New,
                    "assert" => Tok::Assert,
                    "if" => Tok::If,
                    "else" => Tok::Else,
                    _ => Tok::Ident(word),
                };
                push(out, tok);
            }
            '=' if chars.get(i + 1) == Some(&'=') => {
                push(out, Tok::EqEq);
                i += 2;
            }
            '!' if chars.get(i + 1) == Some(&'=') => {
                push(out, Tok::NotEq);
                i += 2;
            }
            _ => {
                let tok = match c {
                    '=' => Tok::Assign,
                    ';' => Tok::Semi,
                    '.' => Tok::Dot,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    other => return Err((line, format!("unexpected character `{other}`"))),
                };
                push(out, tok);
                i += 1;
            }
        }
    }
    Ok(())
}
