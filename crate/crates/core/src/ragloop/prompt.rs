use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::retrieval::KeyExample;

pub const LANGUAGE: &str = "MiniLang";

/// Alert name and description from `<rule>.meta.json`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleMeta {
    pub name: String,
    pub description: String,
    pub severity: String,
}

impl RuleMeta {
    /// Read the sidecar next to `rules_path`. A missing or unreadable file
    /// yields empty metadata, which prompts fill in with the rule id.
    pub fn for_rules(rules_path: &Path) -> Self {
        let path = sidecar_path(rules_path);
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_else(|e| {
                log::warn!("ignoring malformed {}: {e}", path.display());
                RuleMeta::default()
            }),
            Err(_) => RuleMeta::default(),
        }
    }

    pub fn display_name<'a>(&'a self, rule_id: &'a str) -> &'a str {
        if self.name.trim().is_empty() {
            rule_id
        } else {
            &self.name
        }
    }

    pub fn display_description<'a>(&'a self, rule_id: &'a str) -> &'a str {
        if self.description.trim().is_empty() {
            rule_id
        } else {
            &self.description
        }
    }
}

pub fn sidecar_path(rules_path: &Path) -> PathBuf {
    let stem = rules_path.file_stem().and_then(|s| s.to_str()).unwrap_or("rule");
    rules_path.with_file_name(format!("{stem}.meta.json"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    #[serde(skip)]
    pub example: Option<KeyExample>,
}

pub fn system_text() -> String {
    format!(
        "You are a helpful programming assistant to fix security vulnerabilities in {LANGUAGE} code. \
         You are given a code snippet and a description of the vulnerability. \
         You should briefly describe how to fix the vulnerability, and finally output the modification in JSON.\n\
         \n\
         In the JSON, for each modification, use `old_line` to mark the exact line to modify, \
         and `new_line` as the modified line. Example format:\n\
         \n\
         ```json\n\
         [{{ \"old_line\": \"int x = 1;\",\n   \"new_line\": \"int x = 1; x++;\" }}]\n\
         ```\n"
    )
}

/// Fill the prompt template. Without an example this is the plain
/// zero-example prompt.
pub fn build_prompt(
    rule_id: &str,
    meta: &RuleMeta,
    alert_context: &str,
    example: Option<&KeyExample>,
) -> PromptBundle {
    let mut user_text = format!(
        "Vulnerability description: {}: {}\n\nCode snippet:\n```\n{}\n```\n",
        meta.display_name(rule_id),
        meta.display_description(rule_id),
        alert_context.trim_end_matches('\n'),
    );
    if let Some(e) = example {
        user_text.push_str(&format!(
            "\nBelow code snippet is a safe example. You can use it if helpful.\n\n```\n{}\n```\n",
            e.context_text.trim_end_matches('\n')
        ));
    }
    PromptBundle {
        system_text: system_text(),
        user_text,
        example: example.cloned(),
    }
}
