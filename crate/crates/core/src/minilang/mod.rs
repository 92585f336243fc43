//! MiniLang: the toy imperative language that target and corpus codebases
//! are written in, plus extraction of the fixed EDB fact schema.
//!
//! One statement per physical line. Braces may share a line with `if` /
//! `else` headers or sit on their own lines.

mod ast;
mod extract;
mod lexer;
mod parser;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

pub use ast::{CmpOp, Expr, ExprKind, Stmt, StmtKind};
pub use extract::{extract_facts, ExprDescriptor, DescriptorKind, EDB_SCHEMA};

/// File extension of MiniLang sources.
pub const SOURCE_EXTENSION: &str = "ml";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{file}:{line}: {message}")]
pub struct ParseError {
    pub file: String,
    pub line: u32,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum CodebaseError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown location {0}")]
    UnknownLocation(Location),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A source position: file path relative to the codebase root and a 1-based line.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location {
    pub file: String,
    pub line: u32,
}

impl Location {
    pub fn new(file: impl Into<String>, line: u32) -> Self {
        Location {
            file: file.into(),
            line,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid location `{0}`: expected <file>:<line>")]
pub struct LocationParseError(pub String);

impl FromStr for Location {
    type Err = LocationParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (file, line) = s
            .rsplit_once(':')
            .ok_or_else(|| LocationParseError(s.to_string()))?;
        let line: u32 = line
            .parse()
            .map_err(|_| LocationParseError(s.to_string()))?;
        if file.is_empty() || line == 0 {
            return Err(LocationParseError(s.to_string()));
        }
        Ok(Location::new(file, line))
    }
}

impl Serialize for Location {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Location {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// A parsed MiniLang file. `lines` keeps the raw text so that the file can
/// be re-serialized byte-for-byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub path: String,
    pub lines: Vec<String>,
    pub trailing_newline: bool,
    pub statements: Vec<Stmt>,
}

impl SourceFile {
    pub fn text(&self) -> String {
        let mut out = self.lines.join("\n");
        if self.trailing_newline && !self.lines.is_empty() {
            out.push('\n');
        }
        out
    }

    pub fn line(&self, line: u32) -> Option<&str> {
        let idx = usize::try_from(line).ok()?.checked_sub(1)?;
        self.lines.get(idx).map(String::as_str)
    }

    /// Lines `center - radius ..= center + radius`, clipped to the file,
    /// together with the first line number of the window.
    pub fn window(&self, center: u32, radius: u32) -> (u32, String) {
        let n = self.lines.len() as u32;
        if n == 0 {
            return (1, String::new());
        }
        let start = center.saturating_sub(radius).max(1);
        let end = center.saturating_add(radius).min(n);
        let text = self.lines[(start - 1) as usize..end as usize].join("\n");
        (start, text)
    }
}

/// Split raw text into lines, recording whether it ended with a newline.
pub(crate) fn split_lines(text: &str) -> (Vec<String>, bool) {
    if text.is_empty() {
        return (Vec::new(), false);
    }
    let trailing = text.ends_with('\n');
    let body = if trailing { &text[..text.len() - 1] } else { text };
    (body.split('\n').map(str::to_string).collect(), trailing)
}

/// Parse one MiniLang file. Parsing is all-or-nothing.
pub fn parse_file(path: &str, text: &str) -> Result<SourceFile, ParseError> {
    let (lines, trailing_newline) = split_lines(text);
    let tokens = lexer::lex(text).map_err(|(line, message)| ParseError {
        file: path.to_string(),
        line,
        message,
    })?;
    let statements = parser::parse(&tokens).map_err(|(line, message)| ParseError {
        file: path.to_string(),
        line,
        message,
    })?;
    Ok(SourceFile {
        path: path.to_string(),
        lines,
        trailing_newline,
        statements,
    })
}

/// A set of source files analysed together, kept sorted by path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebase {
    pub id: String,
    pub files: Vec<SourceFile>,
}

impl Codebase {
    pub fn new(id: impl Into<String>, mut files: Vec<SourceFile>) -> Self {
        files.sort_by(|a, b| a.path.cmp(&b.path));
        Codebase {
            id: id.into(),
            files,
        }
    }

    pub fn empty(id: impl Into<String>) -> Self {
        Codebase::new(id, Vec::new())
    }

    /// Parse every `(path, text)` pair; the first failure aborts.
    pub fn from_texts<P, T>(id: impl Into<String>, texts: &[(P, T)]) -> Result<Self, ParseError>
    where
        P: AsRef<str>,
        T: AsRef<str>,
    {
        let files = texts
            .iter()
            .map(|(p, t)| parse_file(p.as_ref(), t.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Codebase::new(id, files))
    }

    /// Load every `.ml` file under `root`. Paths are relative, `/`-separated.
    pub fn load_dir(id: impl Into<String>, root: &Path) -> Result<Self, CodebaseError> {
        let texts = read_source_tree(root)?;
        Ok(Codebase::from_texts(id, &texts)?)
    }

    pub fn file(&self, path: &str) -> Option<&SourceFile> {
        self.files
            .binary_search_by(|f| f.path.as_str().cmp(path))
            .ok()
            .map(|i| &self.files[i])
    }

    pub fn file_mut(&mut self, path: &str) -> Option<&mut SourceFile> {
        match self.files.binary_search_by(|f| f.path.as_str().cmp(path)) {
            Ok(i) => Some(&mut self.files[i]),
            Err(_) => None,
        }
    }

    /// The raw line at `location`.
    pub fn snippet_at(&self, location: &Location) -> Result<&str, CodebaseError> {
        self.file(&location.file)
            .and_then(|f| f.line(location.line))
            .ok_or_else(|| CodebaseError::UnknownLocation(location.clone()))
    }

    pub fn texts(&self) -> Vec<(String, String)> {
        self.files.iter().map(|f| (f.path.clone(), f.text())).collect()
    }
}

/// Read all MiniLang sources below `root` as `(relative path, text)`, sorted by path.
pub fn read_source_tree(root: &Path) -> Result<Vec<(String, String)>, CodebaseError> {
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CodebaseError::Io {
            path: root.to_path_buf(),
            source: e
                .into_io_error()
                .unwrap_or_else(|| std::io::Error::other("walk error")),
        })?;
        if !entry.file_type().is_file()
            || entry.path().extension().and_then(|e| e.to_str()) != Some(SOURCE_EXTENSION)
        {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .unwrap_or(entry.path())
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        let text = std::fs::read_to_string(entry.path()).map_err(|source| CodebaseError::Io {
            path: entry.path().to_path_buf(),
            source,
        })?;
        out.push((rel, text));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}
