//! Command-line interface.
//!
//! Exit codes: 0 success, 1 no result (alert not found, repair exhausted),
//! 2 usage error, 3 analysis or internal error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::analyzer::{analyze_dir, AlertId, AlertReport, AnalysisError, AnalysisRun};
use crate::corpus::{build_index, CorpusError, CorpusIndex, CorpusManifest};
use crate::datalog::{AlertInstance, DatalogError, RuleProgram};
use crate::minilang::{read_source_tree, Codebase, CodebaseError};
use crate::ragloop::{
    run_session, ChatBackend, HttpBackend, HttpSettings, MockBackend, RuleMeta, SessionStatus,
};
use crate::retrieval::{
    alert_context, candidate_codebases, oracle_key_examples, prioritize, retrieve, OracleCodebase, RankedExamples,
    RetrievalConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NO_RESULT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "predifix", version, about = "Repair static-analysis alerts with retrieved key examples")]
pub struct Cli {
    /// JSON config file; keys mirror the long flag names.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the effective configuration and progress to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a rule over a codebase and list its alerts.
    Analyze {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Build a corpus index from a manifest.
    Index {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rules whose clean-codebase verdicts are precomputed.
        #[arg(long)]
        rules: Vec<PathBuf>,
    },
    /// Print ranked key examples for one alert.
    Retrieve {
        #[command(flatten)]
        job: AlertJob,
        /// Use the brute-force reference instead of the staged algorithm.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Run a repair session for one alert.
    Fix {
        #[command(flatten)]
        job: AlertJob,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        #[arg(long)]
        mock_config: Option<PathBuf>,
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Write the full session log as JSON here.
        #[arg(long)]
        session_log: Option<PathBuf>,
        /// Do not write patched files.
        #[arg(long)]
        dry_run: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Args)]
pub struct AlertJob {
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Alert id, `<alertPred>@<file>:<line>[;...]`.
    #[arg(long)]
    pub alert: String,
    #[arg(long)]
    pub index: PathBuf,
    /// Corpus files (or directories of them) that must never be retrieved.
    #[arg(long)]
    pub exclude: Vec<PathBuf>,
    #[command(flatten)]
    pub retrieval: RetrievalFlags,
}

#[derive(Debug, Default, Args)]
pub struct RetrievalFlags {
    #[arg(long)]
    pub example_context: Option<u32>,
    #[arg(long)]
    pub alert_context: Option<u32>,
    #[arg(long)]
    pub max_predicate_matches: Option<usize>,
    #[arg(long)]
    pub max_examples_per_source: Option<usize>,
    #[arg(long = "library-glob")]
    pub library_globs: Vec<String>,
    #[arg(long)]
    pub same_file_cond3: bool,
    #[arg(long)]
    pub literal_top_k: Option<usize>,
    #[arg(long)]
    pub literal_min_len: Option<usize>,
}

/// Effective settings: flags over config file over defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    #[serde(flatten)]
    pub retrieval: RetrievalConfig,
    pub backend: BackendKind,
    pub mock_config: Option<PathBuf>,
    #[serde(flatten)]
    pub http: HttpSettings,
    pub limit: Option<usize>,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            retrieval: RetrievalConfig::default(),
            backend: BackendKind::Mock,
            mock_config: None,
            http: HttpSettings::default(),
            limit: None,
        }
    }
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }

    fn apply(&mut self, f: &RetrievalFlags) {
        let r = &mut self.retrieval;
        if let Some(v) = f.example_context {
            r.example_context = v;
        }
        if let Some(v) = f.alert_context {
            r.alert_context = v;
        }
        if let Some(v) = f.max_predicate_matches {
            r.max_predicate_matches = v;
        }
        if let Some(v) = f.max_examples_per_source {
            r.max_examples_per_source = v;
        }
        if !f.library_globs.is_empty() {
            r.library_globs = f.library_globs.clone();
        }
        if f.same_file_cond3 {
            r.same_file_cond3 = true;
        }
        if let Some(v) = f.literal_top_k {
            r.literal_top_k = v;
        }
        if let Some(v) = f.literal_min_len {
            r.literal_min_len = v;
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn failure(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_ERROR,
            message: message.into(),
        }
    }

    fn none(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_NO_RESULT,
            message: message.into(),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::failure(e.to_string())
    }
}

/// Parse arguments, run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(&cli, &mut std::io::stdout().lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut config = CliConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Analyze { rules, target, format } => {
            let program = load_rules(rules)?;
            let (_, run) = analyze_target(&program, target)?;
            print_alerts(out, &run, *format)?;
            Ok(EXIT_OK)
        }
        Command::Index { manifest, out: dir, rules } => {
            let manifest = CorpusManifest::load(manifest).map_err(|e| CliError::usage(e.to_string()))?;
            let index = build_index(&manifest).map_err(|e| CliError::usage(e.to_string()))?;
            for path in rules {
                let program = load_rules(path)?;
                let clean = index.clean_codebases(&program).len();
                info!("rule `{}`: {clean} clean codebase(s)", program.rule_id());
            }
            index.save(dir).map_err(|e| CliError::failure(e.to_string()))?;
            let skipped: usize = index.codebases().iter().map(|c| c.skipped.len()).sum();
            let summary = serde_json::json!({
                "sources": index.codebases().len(),
                "files": index.file_count(),
                "skipped_files": skipped,
                "clean_verdicts": index.cached_verdicts(),
                "out": dir,
            });
            writeln_out(out, &serde_json::to_string_pretty(&summary).expect("json"))?;
            Ok(EXIT_OK)
        }
        Command::Retrieve { job, oracle, limit } => {
            config.apply(&job.retrieval);
            if limit.is_some() {
                config.limit = *limit;
            }
            report_config(cli, &config)?;
            let ctx = JobContext::load(job)?;
            let ranked = if *oracle {
                let corpus: Vec<OracleCodebase> = candidate_codebases(&ctx.index, &ctx.program, &config.retrieval)
                    .into_iter()
                    .map(OracleCodebase::from_indexed)
                    .collect();
                let examples =
                    oracle_key_examples(&ctx.program, &ctx.target.texts(), &ctx.alert, &corpus, &config.retrieval);
                let context = alert_context(&ctx.target, &ctx.alert, config.retrieval.alert_context)
                    .map(|(_, _, t)| t)
                    .unwrap_or_default();
                prioritize(examples, &context, &ctx.program, &config.retrieval)
            } else {
                retrieve(&ctx.program, &ctx.target, &ctx.run, &ctx.alert, &ctx.index, &config.retrieval)
            };
            let json = retrieve_json(&ranked, config.limit);
            writeln_out(out, &serde_json::to_string_pretty(&json).expect("json"))?;
            Ok(EXIT_OK)
        }
        Command::Fix {
            job,
            backend,
            mock_config,
            url,
            model,
            session_log,
            dry_run,
        } => {
            config.apply(&job.retrieval);
            if let Some(b) = backend {
                config.backend = *b;
            }
            if mock_config.is_some() {
                config.mock_config = mock_config.clone();
            }
            if let Some(u) = url {
                config.http.url = u.clone();
            }
            if let Some(m) = model {
                config.http.model = m.clone();
            }
            report_config(cli, &config)?;
            let backend: Box<dyn ChatBackend> = match config.backend {
                BackendKind::Mock => {
                    let path = config
                        .mock_config
                        .as_ref()
                        .ok_or_else(|| CliError::usage("--backend mock needs --mock-config"))?;
                    Box::new(MockBackend::load(path).map_err(|e| CliError::usage(e.to_string()))?)
                }
                BackendKind::Http => Box::new(HttpBackend::new(config.http.clone())),
            };
            let ctx = JobContext::load(job)?;
            let meta = RuleMeta::for_rules(&job.rules);
            let session = run_session(
                &ctx.program,
                &ctx.target,
                &ctx.alert,
                &ctx.index,
                &config.retrieval,
                &meta,
                backend.as_ref(),
            );
            if let Some(path) = session_log {
                std::fs::write(path, session.to_json())
                    .map_err(|e| CliError::failure(format!("{}: {e}", path.display())))?;
            }
            if session.status == SessionStatus::Fixed && !dry_run {
                for (rel, text) in &session.patched_files {
                    let path = job.target.join(rel);
                    std::fs::write(&path, text).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))?;
                }
            }
            writeln_out(out, &serde_json::to_string_pretty(&session.summary()).expect("json"))?;
            Ok(match session.status {
                SessionStatus::Fixed => EXIT_OK,
                SessionStatus::Exhausted => EXIT_NO_RESULT,
                SessionStatus::Error => EXIT_ERROR,
            })
        }
    }
}

fn writeln_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(|e| CliError::failure(format!("writing output: {e}")))
}

fn report_config(cli: &Cli, config: &CliConfig) -> Result<(), CliError> {
    if let Err(msg) = config.retrieval.validate() {
        return Err(CliError::usage(msg));
    }
    if cli.verbose {
        eprintln!(
            "effective config: {}",
            serde_json::to_string_pretty(config).expect("config serializes")
        );
    }
    Ok(())
}

fn load_rules(path: &Path) -> Result<RuleProgram, CliError> {
    if !path.is_file() {
        return Err(CliError::usage(format!("rules file {} not found", path.display())));
    }
    RuleProgram::load(path).map_err(|e| match e {
        DatalogError::Io { .. } => CliError::usage(e.to_string()),
        other => CliError::usage(format!("{}: {other}", path.display())),
    })
}

fn analyze_target(program: &RuleProgram, dir: &Path) -> Result<(Codebase, AnalysisRun), CliError> {
    if !dir.is_dir() {
        return Err(CliError::usage(format!("target directory {} not found", dir.display())));
    }
    Ok(analyze_dir(program, "target", dir)?)
}

fn print_alerts(out: &mut dyn Write, run: &AnalysisRun, format: Format) -> Result<(), CliError> {
    match format {
        Format::Text => {
            for a in &run.alerts {
                writeln_out(out, &AlertId::of(a).to_string())?;
            }
            Ok(())
        }
        Format::Json => {
            let reports: Vec<AlertReport> = run.alerts.iter().map(AlertReport::of).collect();
            writeln_out(out, &serde_json::to_string_pretty(&reports).expect("json"))
        }
    }
}

/// Inputs shared by `retrieve` and `fix`.
struct JobContext {
    program: RuleProgram,
    target: Codebase,
    run: AnalysisRun,
    alert: AlertInstance,
    index: CorpusIndex,
}

impl JobContext {
    fn load(job: &AlertJob) -> Result<Self, CliError> {
        let id: AlertId = job.alert.parse().map_err(|e: crate::analyzer::AlertIdParseError| CliError::usage(e.to_string()))?;
        let program = load_rules(&job.rules)?;
        let (target, run) = analyze_target(&program, &job.target)?;
        let alert = select_alert(&id, &run)?;
        if !job.index.is_dir() {
            return Err(CliError::usage(format!("index directory {} not found", job.index.display())));
        }
        let index = CorpusIndex::load(&job.index).map_err(|e| match e {
            CorpusError::Io { .. } | CorpusError::Manifest(_) => CliError::usage(e.to_string()),
            other => CliError::failure(other.to_string()),
        })?;
        let exclusions = read_exclusions(&job.exclude)?;
        let index = index.apply_exclusion(&exclusions);
        Ok(JobContext {
            program,
            target,
            run,
            alert,
            index,
        })
    }
}

fn select_alert(id: &AlertId, run: &AnalysisRun) -> Result<AlertInstance, CliError> {
    match id.select(run).as_slice() {
        [one] => Ok((*one).clone()),
        [] => Err(CliError::none(format!("alert {id} not found"))),
        many => Err(CliError::usage(format!("alert id {id} is ambiguous ({} matches)", many.len()))),
    }
}

fn read_exclusions(paths: &[PathBuf]) -> Result<Vec<String>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let texts = read_source_tree(p).map_err(|e: CodebaseError| CliError::usage(e.to_string()))?;
            out.extend(texts.into_iter().map(|(_, t)| t));
        } else {
            out.push(std::fs::read_to_string(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?);
        }
    }
    Ok(out)
}

/// `[{predicate, file, line, source, score, context}]` in rank order.
pub fn retrieve_json(ranked: &RankedExamples, limit: Option<usize>) -> serde_json::Value {
    let items: Vec<serde_json::Value> = ranked
        .flatten()
        .into_iter()
        .take(limit.unwrap_or(usize::MAX))
        .map(|e| {
            serde_json::json!({
                "predicate": e.predicate,
                "file": e.snippet.file,
                "line": e.snippet.line,
                "source": e.codebase,
                "score": e.score,
                "context": e.context_text,
            })
        })
        .collect();
    serde_json::Value::Array(items)
}
