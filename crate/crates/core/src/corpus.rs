//! The clean-code corpus: manifest loading, indexing with fact and digest
//! caches, per-rule cleanliness filtering, string-literal source ranking and
//! exact-match exclusion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analyzer::run_on_facts;
use crate::datalog::{FactSet, RuleProgram};
use crate::minilang::{extract_facts, parse_file, read_source_tree, Codebase};

pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("index format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt index: {0}")]
    Corrupt(String),
}

fn io_err(path: &Path, e: impl fmt::Display) -> CorpusError {
    CorpusError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Popular,
    Literal,
    Target,
    User,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::Popular => "popular",
            SourceKind::Literal => "literal",
            SourceKind::Target => "target",
            SourceKind::User => "user",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    pub kind: SourceKind,
    pub path: String,
    pub priority: i64,
}

/// Corpus sources in manifest order. Each source is indexed as one codebase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub sources: Vec<SourceSpec>,
    /// Directory relative source paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl CorpusManifest {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, CorpusError> {
        let mut manifest: CorpusManifest =
            serde_json::from_str(text).map_err(|e| CorpusError::Manifest(e.to_string()))?;
        manifest.base_dir = base_dir.to_path_buf();
        let mut names = BTreeSet::new();
        for s in &manifest.sources {
            if s.name.is_empty() {
                return Err(CorpusError::Manifest("source with empty name".into()));
            }
            if !names.insert(s.name.as_str()) {
                return Err(CorpusError::Manifest(format!("duplicate source name `{}`", s.name)));
            }
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn source_dir(&self, source: &SourceSpec) -> PathBuf {
        self.base_dir.join(&source.path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub error: String,
}

/// One corpus codebase with its cached facts and digests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedCodebase {
    pub source: SourceSpec,
    /// Position of the source in the manifest.
    pub order: usize,
    pub codebase: Codebase,
    /// Per-file content digests, keyed by relative path.
    pub digests: BTreeMap<String, String>,
    pub digest: String,
    pub facts: FactSet,
    pub skipped: Vec<SkippedFile>,
}

pub fn digest_text(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn codebase_digest(digests: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (path, d) in digests {
        h.update(path.as_bytes());
        h.update([0]);
        h.update(d.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

impl IndexedCodebase {
    /// Parse and extract every file. Files that fail to parse are recorded
    /// in `skipped` and left out.
    pub fn from_texts(source: SourceSpec, order: usize, texts: &[(String, String)]) -> Self {
        let mut files = Vec::new();
        let mut skipped = Vec::new();
        for (path, text) in texts {
            match parse_file(path, text) {
                Ok(f) => files.push(f),
                Err(e) => {
                    warn!("corpus source `{}`: skipping {path}: {e}", source.name);
                    skipped.push(SkippedFile {
                        path: path.clone(),
                        error: e.to_string(),
                    });
                }
            }
        }
        let codebase = Codebase::new(source.name.clone(), files);
        let facts = extract_facts(&codebase);
        Self::assemble(source, order, codebase, facts, skipped)
    }

    fn assemble(
        source: SourceSpec,
        order: usize,
        codebase: Codebase,
        facts: FactSet,
        skipped: Vec<SkippedFile>,
    ) -> Self {
        let digests: BTreeMap<String, String> = codebase
            .files
            .iter()
            .map(|f| (f.path.clone(), digest_text(&f.text())))
            .collect();
        let digest = codebase_digest(&digests);
        IndexedCodebase {
            source,
            order,
            codebase,
            digests,
            digest,
            facts,
            skipped,
        }
    }

    pub fn name(&self) -> &str {
        &self.source.name
    }

    pub fn kind(&self) -> SourceKind {
        self.source.kind
    }

    fn sort_key(&self) -> (i64, usize) {
        (self.source.priority, self.order)
    }
}

/// The built corpus. Queries are read-only apart from the cleanliness cache,
/// which is keyed by (rule digest, codebase digest).
#[derive(Debug, Default)]
pub struct CorpusIndex {
    codebases: Vec<IndexedCodebase>,
    clean_cache: Mutex<BTreeMap<(String, String), bool>>,
}

impl Clone for CorpusIndex {
    fn clone(&self) -> Self {
        CorpusIndex {
            codebases: self.codebases.clone(),
            clean_cache: Mutex::new(self.clean_cache.lock().expect("cache lock").clone()),
        }
    }
}

pub fn build_index(manifest: &CorpusManifest) -> Result<CorpusIndex, CorpusError> {
    let mut codebases = Vec::new();
    for (order, source) in manifest.sources.iter().enumerate() {
        let dir = manifest.source_dir(source);
        if !dir.is_dir() {
            return Err(CorpusError::Manifest(format!(
                "source `{}`: path {} does not exist",
                source.name,
                dir.display()
            )));
        }
        let texts = read_source_tree(&dir).map_err(|e| CorpusError::Manifest(format!("source `{}`: {e}", source.name)))?;
        debug!("indexed source `{}`: {} files", source.name, texts.len());
        codebases.push(IndexedCodebase::from_texts(source.clone(), order, &texts));
    }
    Ok(CorpusIndex::from_codebases(codebases))
}

impl CorpusIndex {
    pub fn from_codebases(codebases: Vec<IndexedCodebase>) -> Self {
        CorpusIndex {
            codebases,
            clean_cache: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn codebases(&self) -> &[IndexedCodebase] {
        &self.codebases
    }

    pub fn codebase(&self, name: &str) -> Option<&IndexedCodebase> {
        self.codebases.iter().find(|c| c.name() == name)
    }

    pub fn file_count(&self) -> usize {
        self.codebases.iter().map(|c| c.codebase.files.len()).sum()
    }

    /// Whether `codebase` reports no alert of `program`. Cached.
    pub fn is_clean(&self, program: &RuleProgram, codebase: &IndexedCodebase) -> bool {
        let key = (program.digest(), codebase.digest.clone());
        if let Some(&v) = self.clean_cache.lock().expect("cache lock").get(&key) {
            return v;
        }
        let clean = match run_on_facts(program, codebase.name(), &codebase.facts) {
            Ok(run) => run.alerts.is_empty(),
            Err(e) => {
                warn!("corpus codebase `{}` cannot be analysed: {e}", codebase.name());
                false
            }
        };
        self.clean_cache.lock().expect("cache lock").insert(key, clean);
        clean
    }

    /// Codebases free of alerts of `program`, by (priority, manifest order).
    pub fn clean_codebases(&self, program: &RuleProgram) -> Vec<&IndexedCodebase> {
        let mut out: Vec<&IndexedCodebase> =
            self.codebases.iter().filter(|c| self.is_clean(program, c)).collect();
        out.sort_by_key(|c| c.sort_key());
        out
    }

    pub fn cached_verdicts(&self) -> usize {
        self.clean_cache.lock().expect("cache lock").len()
    }

    /// Rank the `literal` sources by how many of their files contain any
    /// string constant (of at least `min_len` chars) from the rule bodies.
    /// Sources with no matching file are not returned.
    pub fn literal_rank(&self, program: &RuleProgram, top_k: usize, min_len: usize) -> Vec<&IndexedCodebase> {
        let literals: Vec<String> = program
            .body_string_literals()
            .into_iter()
            .filter(|l| l.chars().count() >= min_len)
            .collect();
        if literals.is_empty() {
            return Vec::new();
        }
        let mut scored: Vec<(usize, &IndexedCodebase)> = self
            .codebases
            .iter()
            .filter(|c| c.kind() == SourceKind::Literal)
            .map(|c| {
                let hits = c
                    .codebase
                    .files
                    .iter()
                    .filter(|f| {
                        let text = f.text();
                        literals.iter().any(|l| text.contains(l.as_str()))
                    })
                    .count();
                (hits, c)
            })
            .filter(|(hits, _)| *hits > 0)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.order.cmp(&b.1.order)));
        scored.into_iter().take(top_k).map(|(_, c)| c).collect()
    }

    /// Drop corpus files whose normalized content equals any exclusion text.
    pub fn apply_exclusion(&self, exclusions: &[String]) -> CorpusIndex {
        let banned: BTreeSet<String> = exclusions.iter().map(|t| normalize(t)).collect();
        if banned.is_empty() {
            return self.clone();
        }
        let codebases = self
            .codebases
            .iter()
            .map(|c| {
                let kept: Vec<_> = c
                    .codebase
                    .files
                    .iter()
                    .filter(|f| {
                        let drop = banned.contains(&normalize(&f.text()));
                        if drop {
                            debug!("excluding {}/{} (matches an exclusion file)", c.name(), f.path);
                        }
                        !drop
                    })
                    .cloned()
                    .collect();
                if kept.len() == c.codebase.files.len() {
                    return c.clone();
                }
                let codebase = Codebase::new(c.codebase.id.clone(), kept);
                let facts = extract_facts(&codebase);
                IndexedCodebase::assemble(c.source.clone(), c.order, codebase, facts, c.skipped.clone())
            })
            .collect();
        CorpusIndex {
            codebases,
            clean_cache: Mutex::new(self.clean_cache.lock().expect("cache lock").clone()),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir.join("facts")).map_err(|e| io_err(dir, e))?;
        let record = IndexRecord {
            version: INDEX_VERSION,
            codebases: self
                .codebases
                .iter()
                .map(|c| CodebaseRecord {
                    name: c.source.name.clone(),
                    kind: c.source.kind,
                    path: c.source.path.clone(),
                    priority: c.source.priority,
                    digest: c.digest.clone(),
                    files: c
                        .codebase
                        .files
                        .iter()
                        .map(|f| FileRecord {
                            path: f.path.clone(),
                            digest: c.digests[&f.path].clone(),
                            text: f.text(),
                        })
                        .collect(),
                    skipped: c.skipped.clone(),
                })
                .collect(),
        };
        write_json(&dir.join("index.json"), &record)?;
        for c in &self.codebases {
            let facts = FactsRecord {
                version: INDEX_VERSION,
                codebase: c.name().to_string(),
                digest: c.digest.clone(),
                facts: c.facts.clone(),
            };
            write_json(&dir.join("facts").join(format!("{}.json", c.order)), &facts)?;
        }
        let verdicts = self
            .clean_cache
            .lock()
            .expect("cache lock")
            .iter()
            .map(|((rule, cb), &clean)| VerdictRecord {
                rule_digest: rule.clone(),
                codebase_digest: cb.clone(),
                clean,
            })
            .collect();
        write_json(
            &dir.join("clean.json"),
            &CleanRecord {
                version: INDEX_VERSION,
                verdicts,
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let record: IndexRecord = read_json(&dir.join("index.json"))?;
        check_version(record.version)?;
        let mut codebases = Vec::new();
        for (order, rec) in record.codebases.into_iter().enumerate() {
            let mut files = Vec::new();
            for f in &rec.files {
                if digest_text(&f.text) != f.digest {
                    return Err(CorpusError::Corrupt(format!("{}/{}: digest mismatch", rec.name, f.path)));
                }
                files.push(parse_file(&f.path, &f.text).map_err(|e| CorpusError::Corrupt(e.to_string()))?);
            }
            let source = SourceSpec {
                name: rec.name.clone(),
                kind: rec.kind,
                path: rec.path.clone(),
                priority: rec.priority,
            };
            let codebase = Codebase::new(rec.name.clone(), files);
            let cached: Option<FactsRecord> = read_json(&dir.join("facts").join(format!("{order}.json"))).ok();
            let facts = match cached {
                Some(f) if f.version == INDEX_VERSION && f.digest == rec.digest => f.facts,
                _ => {
                    debug!("fact cache for `{}` missing or stale; re-extracting", rec.name);
                    extract_facts(&codebase)
                }
            };
            let cb = IndexedCodebase::assemble(source, order, codebase, facts, rec.skipped);
            if cb.digest != rec.digest {
                return Err(CorpusError::Corrupt(format!("codebase `{}`: digest mismatch", rec.name)));
            }
            codebases.push(cb);
        }
        let mut cache = BTreeMap::new();
        if let Ok(clean) = read_json::<CleanRecord>(&dir.join("clean.json")) {
            check_version(clean.version)?;
            for v in clean.verdicts {
                cache.insert((v.rule_digest, v.codebase_digest), v.clean);
            }
        }
        Ok(CorpusIndex {
            codebases,
            clean_cache: Mutex::new(cache),
        })
    }
}

/// Trailing whitespace stripped from every line, exactly one trailing newline.
pub fn normalize(text: &str) -> String {
    let lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    let mut out = lines.join("\n").trim_end_matches('\n').to_string();
    out.push('\n');
    out
}

fn check_version(found: u32) -> Result<(), CorpusError> {
    if found != INDEX_VERSION {
        return Err(CorpusError::Version {
            found,
            expected: INDEX_VERSION,
        });
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CorpusError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

#[derive(Serialize, Deserialize)]
struct IndexRecord {
    version: u32,
    codebases: Vec<CodebaseRecord>,
}

#[derive(Serialize, Deserialize)]
struct CodebaseRecord {
    name: String,
    kind: SourceKind,
    path: String,
    priority: i64,
    digest: String,
    files: Vec<FileRecord>,
    skipped: Vec<SkippedFile>,
}

#[derive(Serialize, Deserialize)]
struct FileRecord {
    path: String,
    digest: String,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct FactsRecord {
    version: u32,
    codebase: String,
    digest: String,
    facts: FactSet,
}

#[derive(Serialize, Deserialize)]
struct CleanRecord {
    version: u32,
    verdicts: Vec<VerdictRecord>,
}

#[derive(Serialize, Deserialize)]
struct VerdictRecord {
    rule_digest: String,
    codebase_digest: String,
    clean: bool,
}
