mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::fixture;
use predifix::corpus::digest_text;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_predifix"));
    c.env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dest = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &dest);
        } else {
            std::fs::copy(entry.path(), dest).unwrap();
        }
    }
}

struct F1 {
    _dir: tempfile::TempDir,
    rules: PathBuf,
    target: PathBuf,
    index: PathBuf,
    mock: PathBuf,
}

impl F1 {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("target");
        copy_dir(&fixture("f1/target"), &target);
        let index = dir.path().join("index");
        let rules = fixture("f1/rules/rmi.dl");
        let o = run(&[
            "index",
            "--manifest",
            fixture("f1/manifest.json").to_str().unwrap(),
            "--out",
            index.to_str().unwrap(),
            "--rules",
            rules.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        F1 {
            _dir: dir,
            rules,
            target,
            index,
            mock: fixture("f1/mock.json"),
        }
    }

    fn job<'a>(&'a self, cmd: &'a str, alert: &'a str) -> Vec<String> {
        vec![
            cmd.into(),
            "--rules".into(),
            self.rules.display().to_string(),
            "--target".into(),
            self.target.display().to_string(),
            "--alert".into(),
            alert.into(),
            "--index".into(),
            self.index.display().to_string(),
        ]
    }

    fn main_digest(&self) -> String {
        digest_text(&std::fs::read_to_string(self.target.join("main.ml")).unwrap())
    }
}

fn run_owned(args: &[String]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn analyze_prints_alert_ids() {
    let o = run(&[
        "analyze",
        "--rules",
        fixture("f1/rules/rmi.dl").to_str().unwrap(),
        "--target",
        fixture("f1/target").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "hasAlert@main.ml:3\n");

    let o = run(&[
        "analyze",
        "--rules",
        fixture("f1/rules/rmi.dl").to_str().unwrap(),
        "--target",
        fixture("f1/target").to_str().unwrap(),
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[0]["alert_id"], "hasAlert@main.ml:3");
    assert_eq!(v[0]["locations"][0], "main.ml:3");
}

#[test]
fn analyze_exit_codes() {
    let o = run(&["analyze", "--rules", "/no/such/rules.dl", "--target", "."]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.ml"), "x = ;\n").unwrap();
    let o = run(&[
        "analyze",
        "--rules",
        fixture("f1/rules/rmi.dl").to_str().unwrap(),
        "--target",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);

    let bad_rules = dir.path().join("bad.dl");
    std::fs::write(&bad_rules, ".input q(x: sym)\n.alert p(x: sym)\np(X) :- !q(X).\n").unwrap();
    let o = run(&["analyze", "--rules", bad_rules.to_str().unwrap(), "--target", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unsafe"), "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn retrieve_f1_and_oracle_agree() {
    let f = F1::new();
    let o = run_owned(&f.job("retrieve", "hasAlert@main.ml:3"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let staged: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let items = staged.as_array().unwrap();
    assert_eq!(items.len(), 1);
    assert_eq!(items[0]["predicate"], "putsCredentialTypesKey");
    assert_eq!(items[0]["file"], "jmx.ml");
    assert_eq!(items[0]["line"], 2);
    assert_eq!(items[0]["source"], "safe");
    assert!(items[0]["context"].as_str().unwrap().contains("jmx.remote.rmi.server.credential.types"));
    for key in ["predicate", "file", "line", "source", "score", "context"] {
        assert!(items[0].get(key).is_some(), "missing {key}");
    }

    let mut args = f.job("retrieve", "hasAlert@main.ml:3");
    args.push("--oracle".into());
    let o = run_owned(&args);
    assert_eq!(code(&o), 0);
    let oracle: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(oracle, staged);
}

#[test]
fn retrieve_edge_cases() {
    let f = F1::new();
    let mut args = f.job("retrieve", "hasAlert@main.ml:3");
    args.extend(["--limit".into(), "0".into()]);
    let o = run_owned(&args);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "[]");

    assert_eq!(code(&run_owned(&f.job("retrieve", "hasAlert@main.ml:1"))), 1);
    assert_eq!(code(&run_owned(&f.job("retrieve", "not-an-id"))), 2);

    let mut args = f.job("retrieve", "hasAlert@main.ml:3");
    args.extend(["--exclude".into(), fixture("f1/corpus/safe/jmx.ml").display().to_string()]);
    let o = run_owned(&args);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "[]");
}

#[test]
fn fix_writes_patch() {
    let f = F1::new();
    let log = f._dir.path().join("session.json");
    let mut args = f.job("fix", "hasAlert@main.ml:3");
    args.extend([
        "--backend".into(),
        "mock".into(),
        "--mock-config".into(),
        f.mock.display().to_string(),
        "--session-log".into(),
        log.display().to_string(),
    ]);
    let o = run_owned(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["status"], "fixed");
    assert_eq!(summary["attempts"], 2);
    let text = std::fs::read_to_string(f.target.join("main.ml")).unwrap();
    assert!(text.contains("env.put(\"jmx.remote.rmi.server.credential.types\", types);"));
    let session: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&log).unwrap()).unwrap();
    assert_eq!(session["attempts"].as_array().unwrap().len(), 2);

    let o = run(&[
        "analyze",
        "--rules",
        f.rules.to_str().unwrap(),
        "--target",
        f.target.to_str().unwrap(),
    ]);
    assert_eq!(stdout(&o), "");
}

#[test]
fn fix_dry_run_leaves_target_alone() {
    let f = F1::new();
    let before = f.main_digest();
    let mut args = f.job("fix", "hasAlert@main.ml:3");
    args.extend([
        "--backend".into(),
        "mock".into(),
        "--mock-config".into(),
        f.mock.display().to_string(),
        "--dry-run".into(),
    ]);
    assert_eq!(code(&run_owned(&args)), 0);
    assert_eq!(f.main_digest(), before);
}

#[test]
fn fix_exhausted_with_empty_index() {
    let f = F1::new();
    let dir = tempfile::tempdir().unwrap();
    // One source with no files.
    let manifest = dir.path().join("manifest.json");
    std::fs::write(&manifest, r#"{"sources": [{"name": "none", "kind": "popular", "path": "none", "priority": 0}]}"#).unwrap();
    std::fs::create_dir(dir.path().join("none")).unwrap();
    let empty_index = dir.path().join("idx");
    assert_eq!(
        code(&run(&[
            "index",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            empty_index.to_str().unwrap()
        ])),
        0
    );
    let mock = dir.path().join("mock.json");
    std::fs::write(&mock, r#"{"rules": [], "default_response": "I cannot help."}"#).unwrap();
    let before = f.main_digest();
    let o = run(&[
        "fix",
        "--rules",
        f.rules.to_str().unwrap(),
        "--target",
        f.target.to_str().unwrap(),
        "--alert",
        "hasAlert@main.ml:3",
        "--index",
        empty_index.to_str().unwrap(),
        "--backend",
        "mock",
        "--mock-config",
        mock.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["status"], "exhausted");
    assert_eq!(summary["attempts"], 1);
    assert_eq!(f.main_digest(), before);
}

#[test]
fn fix_mock_needs_config_and_verbose_prints_config() {
    let f = F1::new();
    let mut args = f.job("fix", "hasAlert@main.ml:3");
    args.extend(["--backend".into(), "mock".into()]);
    assert_eq!(code(&run_owned(&args)), 2);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, format!(r#"{{"mock_config": {:?}, "example_context": 1}}"#, f.mock.display().to_string())).unwrap();
    let mut args = f.job("retrieve", "hasAlert@main.ml:3");
    args.extend(["--config".into(), cfg.display().to_string(), "--verbose".into()]);
    let o = run_owned(&args);
    assert_eq!(code(&o), 0);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("effective config"));
    assert!(err.contains("\"example_context\": 1"));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[0]["context"].as_str().unwrap().lines().count(), 3);
}
