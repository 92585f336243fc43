use super::*;
use crate::fixtures::{f1_corpus, f1_program, f1_target, npe_program};
use crate::minilang::{extract_facts, Codebase, Location};

fn edb_for(program: &RuleProgram, codebase: &Codebase) -> FactSet {
    let inputs: Vec<String> = program.inputs().map(|d| d.name.clone()).collect();
    extract_facts(codebase).restrict(inputs.iter().map(String::as_str))
}

fn alerts_on(program: &RuleProgram, codebase: &Codebase) -> Vec<AlertInstance> {
    let full = evaluate(program, &edb_for(program, codebase)).unwrap();
    alerts_of(program, &full)
}

fn single_file(text: &str) -> Codebase {
    Codebase::from_texts("c", &[("f.ml", text)]).unwrap()
}

#[test]
fn npe_program_strata() {
    let p = npe_program();
    let strata: Vec<Vec<&str>> = p
        .strata()
        .iter()
        .map(|s| s.iter().map(String::as_str).collect())
        .collect();
    assert_eq!(
        strata,
        vec![
            vec!["assignStmt", "methodCall", "constructorCall", "assertStmt", "controlFlowTo"],
            vec!["nullGuard"],
            vec!["isNull"],
            vec!["hasAlert"],
        ]
    );
    assert_eq!(p.rules().len(), 5);
}

#[test]
fn unbound_negated_variable_is_unsafe() {
    let text = ".input q(x: sym)\n.alert p(x: sym)\np(X) :- !q(X).\n";
    assert_eq!(
        RuleProgram::parse(text, "t").unwrap_err(),
        DatalogError::UnsafeRule {
            rule: 0,
            variable: "X".into()
        }
    );
}

#[test]
fn negation_self_cycle_is_not_stratifiable() {
    let text = ".input q(x: sym)\n.alert p(x: sym)\np(X) :- q(X), !p(X).\n";
    match RuleProgram::parse(text, "t").unwrap_err() {
        DatalogError::NonStratified { cycle } => assert_eq!(cycle, vec!["p", "p"]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn negation_through_longer_cycle_names_it() {
    let text = ".input e(x: sym)\n.decl a(x: sym)\n.alert b(x: sym)\n\
                a(X) :- e(X), !b(X).\nb(X) :- a(X).\n";
    match RuleProgram::parse(text, "t").unwrap_err() {
        DatalogError::NonStratified { cycle } => assert_eq!(cycle, vec!["b", "a", "b"]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn declaration_errors() {
    let cases = [
        ".alert p(x: sym)\np(X) :- q(X).\n",
        ".input q(x: sym)\n.alert p(x: sym)\np(X) :- q(X, X).\n",
        ".input q(x: sym)\n.alert p(x: num)\np(X) :- q(X).\n",
        ".input q(x: sym)\n.alert p(x: sym)\nq(X) :- p(X).\n",
        ".input q(x: sym)\n.decl q(x: sym)\n.alert p(x: sym)\n",
        ".input q(x: sym)\n",
        ".input q(x: num)\n.alert p(x: num)\np(X) :- q(X), q(\"a\").\n",
        ".input q(x: loc)\n.alert p(x: loc)\np(X) :- q(X), q(\"nowhere\").\n",
        ".input q(x: text)\n.alert p(x: sym)\n",
    ];
    for text in cases {
        assert!(
            matches!(RuleProgram::parse(text, "t"), Err(DatalogError::RuleParse { .. })),
            "accepted: {text}"
        );
    }
}

#[test]
fn npe_alert_on_null_call() {
    let p = npe_program();
    let alerts = alerts_on(&p, &single_file("x = null;\nx.run();"));
    assert_eq!(
        alerts,
        vec![AlertInstance {
            rule_id: "npe".into(),
            predicate: "hasAlert".into(),
            args: vec![Value::loc("f.ml", 2)],
        }]
    );
}

#[test]
fn npe_constructor_guards() {
    let p = npe_program();
    assert!(alerts_on(&p, &single_file("y = new T();\ny.run();")).is_empty());
    let full = evaluate(&p, &edb_for(&p, &single_file("y = new T();\ny.run();"))).unwrap();
    assert!(full.contains("nullGuard", &[Value::sym("y"), Value::loc("f.ml", 1)]));
}

#[test]
fn empty_edb_derives_nothing() {
    for p in [npe_program(), f1_program()] {
        let full = evaluate(&p, &FactSet::new()).unwrap();
        assert!(full.is_empty());
        assert_eq!(evaluate_naive(&p, &FactSet::new()).unwrap(), full);
    }
}

#[test]
fn malformed_edb_is_rejected() {
    let p = npe_program();
    let mut edb = FactSet::new();
    edb.insert("controlFlowTo", vec![Value::sym("a"), Value::loc("f.ml", 1)]);
    assert!(matches!(evaluate(&p, &edb), Err(DatalogError::TypeMismatch { .. })));
    let mut edb = FactSet::new();
    edb.insert("isNull", vec![Value::sym("a"), Value::loc("f.ml", 1)]);
    assert!(matches!(evaluate(&p, &edb), Err(DatalogError::TypeMismatch { .. })));
    let mut edb = FactSet::new();
    edb.insert("constructorCall", vec![]);
    assert!(matches!(evaluate_naive(&p, &edb), Err(DatalogError::TypeMismatch { .. })));
}

#[test]
fn f1_alerts() {
    let p = f1_program();
    let alerts = alerts_on(&p, &f1_target());
    assert_eq!(alerts.len(), 1);
    assert_eq!(alerts[0].rule_id, "rmi");
    assert_eq!(alerts[0].predicate, "hasAlert");
    assert_eq!(alerts[0].args, vec![Value::loc("main.ml", 3)]);
    assert!(alerts_on(&p, &f1_corpus()).is_empty());
}

#[test]
fn flip_credential_key_predicate() {
    let p = f1_program();
    let flipped = negate_predicate(&p, "putsCredentialTypesKey").unwrap();
    let flipped = flipped.program().expect("flip is valid");
    let safe_env = flipped
        .rules()
        .iter()
        .find(|r| r.head.pred == "safeEnv")
        .unwrap();
    assert_eq!(
        safe_env.to_string(),
        "safeEnv(V) :- varDef(V,_), !putsCredentialTypesKey(V,_)."
    );
    // The putsCredentialTypesKey rule itself keeps its head.
    let own = flipped
        .rules()
        .iter()
        .find(|r| r.head.pred == "putsCredentialTypesKey")
        .unwrap();
    assert!(!own.body[0].negated);
}

#[test]
fn flip_skips() {
    let p = f1_program();
    let reason = |pred: &str| negate_predicate(&p, pred).unwrap().skip_reason();
    assert_eq!(reason("mapPut"), Some(SkipReason::UnsafeAfterFlip));
    assert_eq!(reason("serverCreate"), Some(SkipReason::UnsafeAfterFlip));
    assert_eq!(reason("hasAlert"), Some(SkipReason::AlertPredicate));
    assert_eq!(reason("controlFlowTo"), Some(SkipReason::NotABodyPredicate));
    assert_eq!(reason("varDef"), None);
    assert_eq!(
        negate_predicate(&p, "nope").unwrap_err(),
        DatalogError::UnknownPredicate("nope".into())
    );
}

#[test]
fn flip_into_negative_cycle_is_skipped() {
    let text = ".input e(x: sym)\n.decl a(x: sym)\n.decl b(x: sym)\n.alert c(x: sym)\n\
                a(X) :- e(X), b(X).\nb(X) :- e(X), a(X).\nc(X) :- a(X).\n";
    let p = RuleProgram::parse(text, "t").unwrap();
    assert_eq!(
        negate_predicate(&p, "b").unwrap().skip_reason(),
        Some(SkipReason::NonStratifiedAfterFlip)
    );
}

#[test]
fn double_flip_restores_alerts() {
    let p = f1_program();
    for cb in [f1_target(), f1_corpus()] {
        let once = negate_predicate(&p, "putsCredentialTypesKey").unwrap();
        let twice = negate_predicate(once.program().unwrap(), "putsCredentialTypesKey").unwrap();
        assert_eq!(alerts_on(twice.program().unwrap(), &cb), alerts_on(&p, &cb));
        assert_eq!(twice.program().unwrap().rules(), p.rules());
    }
}

#[test]
fn source_text_round_trips() {
    for p in [f1_program(), npe_program()] {
        let again = RuleProgram::parse(&p.to_source(), p.rule_id()).unwrap();
        assert_eq!(again.to_source(), p.to_source());
        assert_eq!(again.strata(), p.strata());
        assert_eq!(again.digest(), p.digest());
    }
}

#[test]
fn body_literals_listing() {
    let p = f1_program();
    assert_eq!(
        p.body_string_literals(),
        vec!["put", "jmx.remote.rmi.server.credential.types", "RMIConnectorServer"]
    );
}

#[test]
fn imports_mark_library_predicates() {
    let lib = ".library\n.input e(x: sym, l: loc)\n.decl anyE(l: loc)\nanyE(L) :- e(_, L).\n";
    let main = ".import \"lib.dl\"\n.alert bad(l: loc)\nbad(L) :- anyE(L).\n";
    let p = RuleProgram::parse_with(main, "main", &mut |path| {
        assert_eq!(path, "lib.dl");
        Ok(lib.to_string())
    })
    .unwrap();
    assert!(p.decl("anyE").unwrap().library);
    assert!(p.decl("e").unwrap().library);
    assert!(!p.decl("bad").unwrap().library);
    assert!(RuleProgram::parse(main, "main").is_err());
}

#[test]
fn loc_constants_are_typed() {
    let text = ".input e(l: loc)\n.alert bad(l: loc)\nbad(L) :- e(L), !e(\"a.ml:1\").\n";
    let p = RuleProgram::parse(text, "t").unwrap();
    let mut edb = FactSet::new();
    edb.insert("e", vec![Value::Loc(Location::new("b.ml", 2))]);
    let full = evaluate(&p, &edb).unwrap();
    assert_eq!(full.count("bad"), 1);
    edb.insert("e", vec![Value::loc("a.ml", 1)]);
    assert_eq!(evaluate(&p, &edb).unwrap().count("bad"), 0);
}

#[test]
fn semi_naive_matches_naive_on_fixtures() {
    for (p, cb) in [
        (npe_program(), single_file("x = null;\na.b();\nif (c) {\nx.run();\n} else {\nassert x != null;\nx.go();\n}\nx.end();\n")),
        (f1_program(), f1_target()),
        (f1_program(), f1_corpus()),
    ] {
        let edb = edb_for(&p, &cb);
        assert_eq!(evaluate(&p, &edb).unwrap(), evaluate_naive(&p, &edb).unwrap());
    }
}

#[test]
fn recursion_reaches_fixed_point() {
    let text = ".input edge(a: sym, b: sym)\n.decl path(a: sym, b: sym)\n.alert cyc(a: sym)\n\
                path(X, Y) :- edge(X, Y).\npath(X, Z) :- path(X, Y), path(Y, Z).\ncyc(X) :- path(X, X).\n";
    let p = RuleProgram::parse(text, "t").unwrap();
    let mut edb = FactSet::new();
    for (a, b) in [("a", "b"), ("b", "c"), ("c", "d"), ("d", "b")] {
        edb.insert("edge", vec![Value::sym(a), Value::sym(b)]);
    }
    let full = evaluate(&p, &edb).unwrap();
    assert_eq!(full.count("path"), 12);
    assert_eq!(full.count("cyc"), 3);
    assert_eq!(full, evaluate_naive(&p, &edb).unwrap());
}
