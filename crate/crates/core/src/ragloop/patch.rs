//! JSON line-edit patches: extraction from model output and application.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::minilang::{parse_file, Codebase, Location};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineEdit {
    pub old_line: String,
    pub new_line: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinePatch {
    pub edits: Vec<LineEdit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum PatchError {
    #[error("no JSON patch found in response")]
    NoPatchFound,
    #[error("edit {index} is malformed: {reason}")]
    MalformedEdit { index: usize, reason: String },
    #[error("edit {index}: no line matches `old_line`")]
    NoMatchingLine { index: usize },
    #[error("patched file {file} does not parse: {message}")]
    Unparseable { file: String, message: String },
}

/// Bodies of ``` fenced blocks, language tag dropped.
fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        let Some(close) = body.find("```") else {
            break;
        };
        out.push(&body[..close]);
        rest = &body[close + 3..];
    }
    out
}

/// Byte ranges of balanced `[ ... ]` regions that start at top level,
/// skipping brackets inside JSON strings.
fn bracket_regions(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'[' {
            i += 1;
            continue;
        }
        let (mut depth, mut in_str, mut esc) = (0usize, false, false);
        let mut end = None;
        for (j, &c) in bytes.iter().enumerate().skip(i) {
            if in_str {
                match (esc, c) {
                    (true, _) => esc = false,
                    (false, b'\\') => esc = true,
                    (false, b'"') => in_str = false,
                    _ => {}
                }
                continue;
            }
            match c {
                b'"' => in_str = true,
                b'[' => depth += 1,
                b']' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(j);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(j) => {
                out.push(&text[i..=j]);
                i = j + 1;
            }
            None => i += 1,
        }
    }
    out
}

fn edits_from(items: &[serde_json::Value]) -> Result<LinePatch, PatchError> {
    if items.is_empty() {
        return Err(PatchError::NoPatchFound);
    }
    let mut edits = Vec::new();
    for (index, item) in items.iter().enumerate() {
        let malformed = |reason: &str| PatchError::MalformedEdit {
            index,
            reason: reason.to_string(),
        };
        let obj = item.as_object().ok_or_else(|| malformed("not an object"))?;
        let field = |name: &str| match obj.get(name) {
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(malformed(&format!("`{name}` is not a string"))),
            None => Err(malformed(&format!("missing `{name}`"))),
        };
        let old_line = field("old_line")?;
        let new_line = field("new_line")?;
        if old_line.trim().is_empty() {
            return Err(malformed("`old_line` is empty"));
        }
        edits.push(LineEdit { old_line, new_line });
    }
    Ok(LinePatch { edits })
}

/// Extract the patch: the first fenced block holding a JSON array, else the
/// first balanced bracket region that parses as an array of objects.
pub fn parse_patch(raw: &str) -> Result<LinePatch, PatchError> {
    for block in fenced_blocks(raw) {
        if let Ok(serde_json::Value::Array(items)) = serde_json::from_str(block.trim()) {
            return edits_from(&items);
        }
    }
    for region in bracket_regions(raw) {
        if let Ok(serde_json::Value::Array(items)) = serde_json::from_str(region) {
            if !items.is_empty() && items.iter().all(|v| v.is_object()) {
                return edits_from(&items);
            }
        }
    }
    Err(PatchError::NoPatchFound)
}

/// Apply edits in order. Each `old_line` is matched on trimmed content,
/// preferring the alert's file and the line nearest the alert. On any error
/// the input codebase is left as is.
pub fn apply_patch(codebase: &Codebase, patch: &LinePatch, alert_at: Option<&Location>) -> Result<Codebase, PatchError> {
    let mut files: Vec<(String, Vec<String>, bool, bool)> = codebase
        .files
        .iter()
        .map(|f| (f.path.clone(), f.lines.clone(), f.trailing_newline, false))
        .collect();
    for (index, edit) in patch.edits.iter().enumerate() {
        let wanted = edit.old_line.trim();
        // (not in alert file, distance, file index, line index)
        let mut best: Option<(bool, usize, usize, usize)> = None;
        for (fi, (path, lines, _, _)) in files.iter().enumerate() {
            let in_alert_file = alert_at.is_some_and(|a| &a.file == path);
            for (li, line) in lines.iter().enumerate() {
                if line.trim() != wanted {
                    continue;
                }
                let dist = match alert_at {
                    Some(a) if in_alert_file => (li + 1).abs_diff(a.line as usize),
                    _ => li,
                };
                let key = (!in_alert_file, dist, fi, li);
                if best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
            }
        }
        let Some((_, _, fi, li)) = best else {
            return Err(PatchError::NoMatchingLine { index });
        };
        let (_, lines, _, changed) = &mut files[fi];
        if edit.new_line.is_empty() {
            lines.remove(li);
        } else {
            let replacement: Vec<String> = edit.new_line.split('\n').map(|l| l.trim_end_matches('\r').to_string()).collect();
            lines.splice(li..=li, replacement);
        }
        *changed = true;
    }
    let mut out = codebase.clone();
    for (path, lines, trailing, changed) in files {
        if !changed {
            continue;
        }
        let mut text = lines.join("\n");
        if trailing && !lines.is_empty() {
            text.push('\n');
        }
        let parsed = parse_file(&path, &text).map_err(|e| PatchError::Unparseable {
            file: path.clone(),
            message: e.to_string(),
        })?;
        *out.file_mut(&path).expect("file exists") = parsed;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{f1_target, F1_TARGET};

    fn edit(old: &str, new: &str) -> LinePatch {
        LinePatch {
            edits: vec![LineEdit {
                old_line: old.into(),
                new_line: new.into(),
            }],
        }
    }

    #[test]
    fn parses_fenced_json() {
        let raw = "Fix it.\n```json\n[{\"old_line\":\"a;\",\"new_line\":\"b;\"}]\n```\n";
        assert_eq!(parse_patch(raw).unwrap(), edit("a;", "b;"));
    }

    #[test]
    fn parse_failures() {
        assert_eq!(parse_patch("just prose, sorry"), Err(PatchError::NoPatchFound));
        assert!(matches!(
            parse_patch("```json\n[{\"old_line\":\"a;\"}]\n```"),
            Err(PatchError::MalformedEdit { index: 0, .. })
        ));
        assert!(matches!(
            parse_patch("```\n[{\"old_line\":\"a;\",\"new_line\":\"b\"},{\"old_line\":\" \",\"new_line\":\"c\"}]\n```"),
            Err(PatchError::MalformedEdit { index: 1, .. })
        ));
        assert_eq!(parse_patch("```json\n[]\n```"), Err(PatchError::NoPatchFound));
    }

    #[test]
    fn unfenced_fallback_skips_non_patch_brackets() {
        let raw = "Use a[0] here. [{\"old_line\": \"x[1] = 2;\", \"new_line\": \"y;\"}] done";
        assert_eq!(parse_patch(raw).unwrap(), edit("x[1] = 2;", "y;"));
        let raw = "```text\nnot json\n```\n[{\"old_line\":\"a;\",\"new_line\":\"\"}]";
        assert_eq!(parse_patch(raw).unwrap(), edit("a;", ""));
    }

    #[test]
    fn insertion_via_newline() {
        let cb = f1_target();
        let p = edit(
            "env.put(\"socketFactory\", f);",
            "env.put(\"socketFactory\", f);\nenv.put(\"jmx.remote.rmi.server.credential.types\", types);",
        );
        let out = apply_patch(&cb, &p, Some(&Location::new("main.ml", 3))).unwrap();
        let f = out.file("main.ml").unwrap();
        assert_eq!(f.lines.len(), 4);
        assert_eq!(f.line(3).unwrap(), "env.put(\"jmx.remote.rmi.server.credential.types\", types);");
        assert!(f.text().ends_with('\n'));
    }

    #[test]
    fn trimmed_match_keeps_replacement_verbatim() {
        let cb = Codebase::from_texts("t", &[("a.ml", "if (c) {\n    x.run();\n}\n")]).unwrap();
        let out = apply_patch(&cb, &edit("x.run();  ", "  x.go();"), None).unwrap();
        assert_eq!(out.file("a.ml").unwrap().line(2).unwrap(), "  x.go();");
    }

    #[test]
    fn nearest_duplicate_is_edited() {
        let text = "a.b();\nx = 1;\na.b();\ny = 2;\nz = 3;\na.b();\n";
        let cb = Codebase::from_texts("t", &[("a.ml", text)]).unwrap();
        let out = apply_patch(&cb, &edit("a.b();", "a.c();"), Some(&Location::new("a.ml", 4))).unwrap();
        let lines = &out.file("a.ml").unwrap().lines;
        assert_eq!(lines[2], "a.c();");
        assert_eq!(lines[0], "a.b();");
        // Equidistant candidates at lines 1 and 3 from line 2: smaller wins.
        let out = apply_patch(&cb, &edit("a.b();", "a.c();"), Some(&Location::new("a.ml", 2))).unwrap();
        assert_eq!(out.file("a.ml").unwrap().lines[0], "a.c();");
    }

    #[test]
    fn alert_file_is_searched_first() {
        let cb = Codebase::from_texts("t", &[("a.ml", "k = 1;\n"), ("b.ml", "x = 0;\nk = 1;\n")]).unwrap();
        let out = apply_patch(&cb, &edit("k = 1;", "k = 2;"), Some(&Location::new("b.ml", 1))).unwrap();
        assert_eq!(out.file("a.ml").unwrap().text(), "k = 1;\n");
        assert_eq!(out.file("b.ml").unwrap().line(2).unwrap(), "k = 2;");
    }

    #[test]
    fn deletion() {
        let out = apply_patch(&f1_target(), &edit("env.put(\"socketFactory\", f);", ""), None).unwrap();
        assert_eq!(out.file("main.ml").unwrap().lines.len(), 2);
    }

    #[test]
    fn no_match_leaves_codebase_untouched() {
        let cb = f1_target();
        let p = LinePatch {
            edits: vec![
                LineEdit {
                    old_line: "env = new HashMap();".into(),
                    new_line: "env = null;".into(),
                },
                LineEdit {
                    old_line: "missing();".into(),
                    new_line: "x;".into(),
                },
            ],
        };
        assert_eq!(apply_patch(&cb, &p, None), Err(PatchError::NoMatchingLine { index: 1 }));
        assert_eq!(cb.file("main.ml").unwrap().text(), F1_TARGET);
    }

    #[test]
    fn edits_see_earlier_edits() {
        let cb = Codebase::from_texts("t", &[("a.ml", "x = 1;\n")]).unwrap();
        let p = LinePatch {
            edits: vec![
                LineEdit {
                    old_line: "x = 1;".into(),
                    new_line: "x = 2;".into(),
                },
                LineEdit {
                    old_line: "x = 2;".into(),
                    new_line: "x = 3;".into(),
                },
            ],
        };
        assert_eq!(apply_patch(&cb, &p, None).unwrap().file("a.ml").unwrap().text(), "x = 3;\n");
    }

    #[test]
    fn unparseable_result_is_an_error() {
        let err = apply_patch(&f1_target(), &edit("env = new HashMap();", "env = ;"), None).unwrap_err();
        assert!(matches!(err, PatchError::Unparseable { .. }));
    }
}
