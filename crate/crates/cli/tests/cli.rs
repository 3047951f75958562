use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqa"))
        .args(args)
        .env_remove("CQA_ORACLE_CAP")
        .output()
        .expect("run cqa")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn field(out: &Output, key: &str) -> Option<String> {
    stdout(out)
        .lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix('=').map(str::to_string))
}

/// A scratch directory unique to one test.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cqa-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const CHAIN: &str = "R(a; b)\nR(b; c)\nX(c; e)\nR(a; d)\nR(d; b)\n";

#[test]
fn classify_golden_queries() {
    for (q, class) in [
        ("C(R(A,B),R(B,A))", "CONP_COMPLETE"),
        ("C(R(A,B),R(A,B))", "FO"),
        ("R(R(X(_)))", "NLHARD_IN_LFP"),
    ] {
        let out = cqa(&["classify", q]);
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(field(&out, "class").as_deref(), Some(class), "{q}");
    }
}

#[test]
fn classify_graph_query_outside_trees() {
    let out = cqa(&["classify", "--graph", "R(x; y, z), R(z; x, y)"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(field(&out, "class").as_deref(), Some("LHARD_NOT_FO_UPPER_OPEN"));
    assert_eq!(field(&out, "upper_bound_open").as_deref(), Some("true"));
}

#[test]
fn query_can_come_from_a_file() {
    let dir = scratch("qfile");
    let path = write(&dir, "q.txt", "# two siblings\nC(R(A,B),\n  R(B,A))\n");
    let from_file = cqa(&["classify", &path]);
    let literal = cqa(&["classify", "C(R(A,B),R(B,A))"]);
    assert_eq!(field(&from_file, "class"), field(&literal, "class"));
}

#[test]
fn fig5_is_not_certain() {
    let dir = scratch("fig5");
    let db = dir.join("fig5.facts");
    let gen = cqa(&["gadget", "fig5", "--out", db.to_str().unwrap()]);
    assert_eq!(gen.status.code(), Some(0));
    assert_eq!(field(&gen, "facts").as_deref(), Some("12"));
    assert_eq!(field(&gen, "repairs").as_deref(), Some("16"));
    let out = cqa(&["certain", "C(R(A,B),R(B,A))", db.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(field(&out, "certain").as_deref(), Some("false"));
    assert_eq!(field(&out, "method").as_deref(), Some("oracle"));
}

#[test]
fn chain_is_certain_with_a_witness() {
    let dir = scratch("chain");
    let db = write(&dir, "chain.facts", CHAIN);
    let out = cqa(&["certain", "R(R(X(_)))", &db]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(field(&out, "certain").as_deref(), Some("true"));
    assert_eq!(field(&out, "method").as_deref(), Some("fixpoint"));
    assert_eq!(field(&out, "witness").as_deref(), Some("a"));
}

#[test]
fn forward_method_needs_c1_unless_forced() {
    let dir = scratch("forward");
    let db = write(&dir, "chain.facts", CHAIN);
    let refused = cqa(&["certain", "--method", "forward", "R(R(X(_)))", &db]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(refused.stdout.is_empty());
    let forced = cqa(&["certain", "--method", "forward", "--force", "R(R(X(_)))", &db]);
    assert!(matches!(forced.status.code(), Some(0 | 1)));
    assert_eq!(field(&forced, "method").as_deref(), Some("forward"));
}

#[test]
fn fixpoint_and_oracle_agree() {
    let dir = scratch("agree");
    let dbs = [
        CHAIN,
        "R(a; b)\nR(a; c)\nR(b; d)\nX(d; e)\n",
        "R(a; a)\nX(a; b)\nX(a; c)\n",
        "R(a; b)\nR(b; a)\nR(b; c)\nX(a; d)\n",
    ];
    for (i, text) in dbs.iter().enumerate() {
        let db = write(&dir, &format!("{i}.facts"), text);
        let fix = cqa(&["certain", "--method", "fixpoint", "R(R(X(_)))", &db]);
        let orc = cqa(&["certain", "--method", "oracle", "R(R(X(_)))", &db]);
        let raw = cqa(&["oracle", "R(R(X(_)))", &db]);
        assert_eq!(fix.status.code(), orc.status.code(), "{text}");
        assert_eq!(fix.status.code(), raw.status.code(), "{text}");
        assert!(matches!(fix.status.code(), Some(0 | 1)));
    }
}

#[test]
fn oracle_reports_a_falsifying_repair() {
    let dir = scratch("falsify");
    let db = write(&dir, "db.facts", "R(a; b)\nR(a; c)\nR(b; d)\nX(d; e)\n");
    let out = cqa(&["oracle", "R(R(X(_)))", &db]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(
        field(&out, "falsifying_repair").as_deref(),
        Some("R(a; c); R(b; d); X(d; e)")
    );
}

#[test]
fn oracle_cap_comes_from_the_environment() {
    let dir = scratch("cap");
    let db = dir.join("fig5.facts");
    cqa(&["gadget", "fig5", "--out", db.to_str().unwrap()]);
    let out = Command::new(env!("CARGO_BIN_EXE_cqa"))
        .args(["oracle", "C(R(A,B),R(B,A))", db.to_str().unwrap()])
        .env("CQA_ORACLE_CAP", "4")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let flag = cqa(&["oracle", "--cap", "4", "C(R(A,B),R(B,A))", db.to_str().unwrap()]);
    assert_eq!(flag.status.code(), Some(2));
}

#[test]
fn sat_and_reach_gadgets_produce_non_certain_instances() {
    let dir = scratch("gadgets");
    let sat = dir.join("sat.facts");
    let gen = cqa(&[
        "gadget",
        "sat",
        "--query",
        "C(R(A,B),R(B,A))",
        "--cnf",
        "(x1|x2)&(~x1|~x2)",
        "--out",
        sat.to_str().unwrap(),
    ]);
    assert_eq!(gen.status.code(), Some(0));
    assert_eq!(field(&gen, "satisfiable").as_deref(), Some("true"));
    let out = cqa(&["certain", "C(R(A,B),R(B,A))", sat.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let unsat = dir.join("unsat.facts");
    let gen = cqa(&[
        "gadget",
        "sat",
        "--query",
        "C(R(A,B),R(B,A))",
        "--cnf",
        "(x1)&(~x1)",
        "--out",
        unsat.to_str().unwrap(),
    ]);
    assert_eq!(gen.status.code(), Some(0));
    assert_eq!(
        cqa(&["certain", "C(R(A,B),R(B,A))", unsat.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );

    let reach = dir.join("reach.facts");
    let gen = cqa(&[
        "gadget",
        "reach",
        "--query",
        "R(R(X(_)))",
        "--edges",
        "s>a,a>t",
        "--out",
        reach.to_str().unwrap(),
    ]);
    assert_eq!(gen.status.code(), Some(0));
    assert_eq!(field(&gen, "pair").as_deref(), Some("x0/x1"));
    assert_eq!(
        cqa(&["certain", "R(R(X(_)))", reach.to_str().unwrap()]).status.code(),
        Some(1)
    );

    let cut = dir.join("cut.facts");
    cqa(&[
        "gadget",
        "reach",
        "--query",
        "R(R(X(_)))",
        "--edges",
        "s>a",
        "--out",
        cut.to_str().unwrap(),
    ]);
    assert_eq!(
        cqa(&["certain", "R(R(X(_)))", cut.to_str().unwrap()]).status.code(),
        Some(0)
    );
}

#[test]
fn sat_gadget_rejects_queries_satisfying_c2() {
    let dir = scratch("satbad");
    let out = cqa(&[
        "gadget",
        "sat",
        "--query",
        "R(R(X(_)))",
        "--cnf",
        "(x1)",
        "--out",
        dir.join("x.facts").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sjf_lift_keeps_the_repair_count() {
    let dir = scratch("lift");
    let db = write(&dir, "sjf.facts", "R_1(a; b)\nR_1(a; c)\nR_2(b; d)\n");
    let out_path = dir.join("lifted.facts");
    let out = cqa(&[
        "gadget",
        "sjf-lift",
        "--query",
        "R(x; y), R(y; z)",
        "--db",
        &db,
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(field(&out, "facts").as_deref(), Some("3"));
    assert_eq!(field(&out, "repairs").as_deref(), Some("2"));
}

#[test]
fn frugal_repair_decides_the_chain() {
    let dir = scratch("frugal");
    let db = write(&dir, "chain.facts", CHAIN);
    let out = cqa(&["frugal", "R(R(X(_)))", &db]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(field(&out, "satisfies").as_deref(), Some("true"));
    let facts = stdout(&out).lines().filter(|l| l.starts_with("fact=")).count();
    assert_eq!(facts.to_string(), field(&out, "facts").unwrap());
}

#[test]
fn reports_are_deterministic_up_to_timing() {
    let dir = scratch("determinism");
    let db = write(&dir, "chain.facts", CHAIN);
    let strip = |o: Output| {
        let text = String::from_utf8(o.stdout).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines.last().unwrap().starts_with("time_ms="));
        lines[..lines.len() - 1].join("\n")
    };
    for args in [
        vec!["certain", "R(R(X(_)))", db.as_str()],
        vec!["classify", "C(R(A,B),R(B,A))"],
        vec!["selftest", "--cases", "20"],
    ] {
        assert_eq!(strip(cqa(&args)), strip(cqa(&args)), "{args:?}");
    }
    let a = dir.join("a.facts");
    let b = dir.join("b.facts");
    for p in [&a, &b] {
        cqa(&[
            "gadget",
            "sat",
            "--query",
            "C(R(A,B),R(B,A))",
            "--cnf",
            "(x1|x2)",
            "--out",
            p.to_str().unwrap(),
        ]);
    }
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn selftest_passes() {
    let out = cqa(&["selftest", "--cases", "150", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert_eq!(field(&out, "result").as_deref(), Some("PASS"));
}

#[test]
fn bad_input_exits_with_two() {
    assert_eq!(cqa(&["classify", "R(("]).status.code(), Some(2));
    assert_eq!(
        cqa(&["certain", "R(R(X(_)))", "/nonexistent/db"]).status.code(),
        Some(2)
    );
    assert_eq!(cqa(&["certain"]).status.code(), Some(2));
}
