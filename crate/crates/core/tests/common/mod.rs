//! Shared fixtures and random instance generators for integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use predifix::analyzer::run_analysis;
use predifix::corpus::{build_index, CorpusIndex, CorpusManifest, IndexedCodebase, SourceKind, SourceSpec};
use predifix::datalog::{AlertInstance, FactSet, RuleProgram, Value};
use predifix::minilang::Codebase;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub fn fixture(path: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(path)
}

pub fn load_program(path: &str) -> RuleProgram {
    RuleProgram::load(&fixture(path)).unwrap()
}

pub fn load_target(path: &str) -> Codebase {
    Codebase::load_dir("target", &fixture(path)).unwrap()
}

pub fn load_index(manifest: &str) -> CorpusIndex {
    build_index(&CorpusManifest::load(&fixture(manifest)).unwrap()).unwrap()
}

pub fn only_alert(program: &RuleProgram, target: &Codebase) -> AlertInstance {
    let run = run_analysis(program, target).unwrap();
    assert_eq!(run.alerts.len(), 1, "expected exactly one alert");
    run.alerts.into_iter().next().unwrap()
}

/// A random stratified program over three symbol inputs, with its EDB.
/// Derived predicates sit on levels 1..=2; negation only looks downwards.
pub fn random_datalog(seed: u64) -> (String, FactSet) {
    let mut rng = StdRng::seed_from_u64(seed);
    let inputs = [("e0", 2usize), ("e1", 1), ("e2", 2)];
    let n_derived = rng.gen_range(1..=4);
    let derived: Vec<(String, usize, usize)> = (0..n_derived)
        .map(|i| (format!("d{i}"), rng.gen_range(1..=2), rng.gen_range(1..=2)))
        .collect();

    let mut text = String::new();
    for (name, arity) in inputs {
        text.push_str(&decl(".input", name, arity));
    }
    for (name, arity, _) in &derived {
        text.push_str(&decl(".decl", name, *arity));
    }
    text.push_str(".alert out(x: sym)\n");

    // (name, arity, level); inputs are level 0.
    let all: Vec<(String, usize, usize)> = inputs
        .iter()
        .map(|(n, a)| (n.to_string(), *a, 0))
        .chain(derived.iter().cloned())
        .collect();
    let vars = ["X", "Y", "Z"];
    let consts = ["a", "b", "c", "d"];

    let rule = |rng: &mut StdRng, head: &str, arity: usize, level: usize| -> String {
        let positives: Vec<&(String, usize, usize)> = all.iter().filter(|p| p.2 <= level && p.0 != "out").collect();
        let mut body = Vec::new();
        let mut bound: Vec<&str> = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            let (name, a, _) = positives.choose(rng).unwrap();
            let args: Vec<String> = (0..*a)
                .map(|_| {
                    if rng.gen_bool(0.1) {
                        format!("\"{}\"", consts.choose(rng).unwrap())
                    } else {
                        let v = *vars.choose(rng).unwrap();
                        bound.push(v);
                        v.to_string()
                    }
                })
                .collect();
            body.push(format!("{name}({})", args.join(", ")));
        }
        if bound.is_empty() {
            // e1 is unary: bind X through it.
            body.push("e1(X)".to_string());
            bound.push("X");
        }
        let lower: Vec<&(String, usize, usize)> = all.iter().filter(|p| p.2 < level).collect();
        if !lower.is_empty() && rng.gen_bool(0.5) {
            let (name, a, _) = lower.choose(rng).unwrap();
            let args: Vec<String> = (0..*a)
                .map(|_| match rng.gen_range(0..5) {
                    0 => "_".to_string(),
                    1 => format!("\"{}\"", consts.choose(rng).unwrap()),
                    _ => bound.choose(rng).unwrap().to_string(),
                })
                .collect();
            body.push(format!("!{name}({})", args.join(", ")));
        }
        let head_args: Vec<&str> = (0..arity).map(|_| *bound.choose(rng).unwrap()).collect();
        format!("{head}({}) :- {}.\n", head_args.join(", "), body.join(", "))
    };

    for (name, arity, level) in &derived {
        for _ in 0..rng.gen_range(1..=2) {
            text.push_str(&rule(&mut rng, name, *arity, *level));
        }
    }
    text.push_str(&rule(&mut rng, "out", 1, 3));

    let mut edb = FactSet::new();
    for _ in 0..rng.gen_range(0..=40) {
        let (name, arity) = inputs.choose(&mut rng).unwrap();
        let tuple = (0..*arity).map(|_| Value::sym(*consts.choose(&mut rng).unwrap())).collect();
        edb.insert(name, tuple);
    }
    (text, edb)
}

fn decl(kw: &str, name: &str, arity: usize) -> String {
    let params: Vec<String> = (0..arity).map(|i| format!("p{i}: sym")).collect();
    format!("{kw} {name}({})\n", params.join(", "))
}

const MINI_INPUTS: &str = "\
.input assignStmt(v: sym, e: sym, l: loc)
.input varDef(v: sym, l: loc)
.input varUse(v: sym, l: loc)
.input methodCall(v: sym, m: sym, l: loc)
.input callArgStr(l: loc, i: num, s: sym)
.input callArgVar(l: loc, i: num, v: sym)
.input constructorCall(e: sym)
.input constructorName(e: sym, n: sym)
.input ctorArgVar(e: sym, i: num, v: sym)
.input assertStmt(v: sym, op: sym, e: sym, l: loc)
.input controlFlowTo(l0: loc, l1: loc)
";

/// (name, declaration, rules, dependencies)
const POOL: &[(&str, &str, &[&str], &[&str])] = &[
    ("nullAssign", ".decl nullAssign(v: sym, l: loc)", &["nullAssign(V, L) :- assignStmt(V, \"null\", L)."], &[]),
    ("newAssign", ".decl newAssign(v: sym, l: loc)", &["newAssign(V, L) :- assignStmt(V, E, L), constructorCall(E)."], &[]),
    ("callOn", ".decl callOn(v: sym, l: loc)", &["callOn(V, L) :- methodCall(V, _, L)."], &[]),
    ("putKey", ".decl putKey(v: sym, k: sym, l: loc)", &["putKey(V, K, L) :- methodCall(V, \"put\", L), callArgStr(L, 0, K)."], &[]),
    ("guarded", ".decl guarded(v: sym, l: loc)", &["guarded(V, L) :- assertStmt(V, \"!=\", \"null\", L)."], &[]),
    (
        "reach",
        ".decl reach(v: sym, l: loc)",
        &[
            "reach(V, L) :- nullAssign(V, L).",
            "reach(V, L) :- reach(V, L0), controlFlowTo(L0, L), !newAssign(V, L).",
        ],
        &["nullAssign", "newAssign"],
    ),
    ("keyed", ".decl keyed(v: sym)", &["keyed(V) :- putKey(V, \"key.k\", _)."], &["putKey"]),
    ("used", ".decl used(v: sym, l: loc)", &["used(V, L) :- varUse(V, L)."], &[]),
];

const ALERTS: &[(&str, &[&str])] = &[
    ("bad(L) :- callOn(V, L), reach(V, L).", &["callOn", "reach"]),
    ("bad(L) :- putKey(V, _, L), !keyed(V).", &["putKey", "keyed"]),
    ("bad(L) :- used(V, L), nullAssign(V, _), !guarded(V, _).", &["used", "nullAssign", "guarded"]),
    ("bad(L) :- newAssign(V, L), !keyed(V).", &["newAssign", "keyed"]),
];

fn random_program(rng: &mut StdRng) -> String {
    let mut wanted: Vec<&str> = Vec::new();
    let mut alert_rules = Vec::new();
    for _ in 0..rng.gen_range(1..=2) {
        let (rule, deps) = ALERTS.choose(rng).unwrap();
        if !alert_rules.contains(rule) {
            alert_rules.push(*rule);
        }
        wanted.extend(deps.iter());
    }
    for (name, ..) in POOL {
        if rng.gen_bool(0.2) {
            wanted.push(name);
        }
    }
    // Dependency closure.
    loop {
        let before = wanted.len();
        for (name, _, _, deps) in POOL {
            if wanted.contains(name) {
                for d in deps.iter() {
                    if !wanted.contains(d) {
                        wanted.push(d);
                    }
                }
            }
        }
        if wanted.len() == before {
            break;
        }
    }
    let mut text = MINI_INPUTS.to_string();
    for (name, decl, _, _) in POOL {
        if wanted.contains(name) {
            text.push_str(decl);
            text.push('\n');
        }
    }
    text.push_str(".alert bad(l: loc)\n");
    for (name, _, rules, _) in POOL {
        if wanted.contains(name) {
            for r in rules.iter() {
                text.push_str(r);
                text.push('\n');
            }
        }
    }
    for r in alert_rules {
        text.push_str(r);
        text.push('\n');
    }
    text
}

fn random_lines(rng: &mut StdRng, n: usize, safe: bool) -> String {
    let vars = ["x", "y"];
    let mut out = String::new();
    for _ in 0..n {
        let v = vars.choose(rng).unwrap();
        let w = vars.choose(rng).unwrap();
        // Corpus code leans towards guarded, keyed and constructed values.
        let pick = if safe { [0, 1, 1, 2, 3, 3, 5, 5, 6, 7][rng.gen_range(0..10)] } else { rng.gen_range(0..8) };
        let line = match pick {
            0 => format!("{v} = null;"),
            1 => format!("{v} = new T();"),
            2 => format!("{v}.run();"),
            3 => format!("{v}.put(\"key.k\", {w});"),
            4 => format!("{v}.put(\"key.j\", {w});"),
            5 => format!("assert {v} != null;"),
            6 => format!("{v} = {w}.get();"),
            _ => "log.info(\"m\");".to_string(),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn random_codebase_texts(rng: &mut StdRng, max_lines: usize, safe: bool) -> Vec<(String, String)> {
    let files = rng.gen_range(1..=2);
    let total = rng.gen_range(files..=max_lines);
    let first = if files == 1 { total } else { rng.gen_range(1..total) };
    let mut out = vec![("a.ml".to_string(), random_lines(rng, first, safe))];
    if files == 2 {
        out.push(("b.ml".to_string(), random_lines(rng, total - first, safe)));
    }
    out
}

/// A small retrieval instance: a rule, a target with at least one alert,
/// and up to three corpus codebases of at most ten lines each.
pub struct MicroInstance {
    pub program: RuleProgram,
    pub target: Codebase,
    pub alert: AlertInstance,
    pub index: CorpusIndex,
}

pub fn random_micro_instance(seed: u64) -> MicroInstance {
    let mut rng = StdRng::seed_from_u64(seed);
    loop {
        let program = RuleProgram::parse(&random_program(&mut rng), "micro").expect("generated program is valid");
        let target = Codebase::from_texts("target", &random_codebase_texts(&mut rng, 10, false)).unwrap();
        let run = run_analysis(&program, &target).unwrap();
        let Some(alert) = run.alerts.iter().next().cloned() else {
            continue;
        };
        let kinds = [SourceKind::Popular, SourceKind::User, SourceKind::Target];
        let codebases: Vec<IndexedCodebase> = (0..rng.gen_range(1..=3))
            .map(|i| {
                let spec = SourceSpec {
                    name: format!("c{i}"),
                    kind: kinds[i],
                    path: format!("c{i}"),
                    priority: i as i64,
                };
                // A few tries at a clean codebase; dirty ones are kept too.
                let mut cb = IndexedCodebase::from_texts(spec.clone(), i, &random_codebase_texts(&mut rng, 10, true));
                for _ in 0..4 {
                    if run_analysis(&program, &cb.codebase).unwrap().alerts.is_empty() {
                        break;
                    }
                    cb = IndexedCodebase::from_texts(spec.clone(), i, &random_codebase_texts(&mut rng, 10, true));
                }
                cb
            })
            .collect();
        return MicroInstance {
            program,
            target,
            alert,
            index: CorpusIndex::from_codebases(codebases),
        };
    }
}
