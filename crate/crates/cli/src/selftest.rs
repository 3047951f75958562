//! Seeded invariant checks over generated corpora and the reduction gadgets.

use cqa_core::classification::{
    c1_direct, c2_direct, check_conditions, classify_tree, preorder_le, ComplexityClass, Record,
};
use cqa_core::engine::{certain_with, compute_b, compute_b_forward, frugal_repair, Method};
use cqa_core::fuzz::{self, DbParams, TreeParams};
use cqa_core::gadgets::{fig5_instance, reach_gadget, sat_gadget, Digraph, MonotoneCnf};
use cqa_core::oracle::{brute_certain, eval_cq, DEFAULT_CAP};
use cqa_core::{TreeQuery, Vertex};

pub const DEFAULT_SEED: u64 = 20_240_601;

struct Check {
    name: &'static str,
    failures: usize,
    total: usize,
}

fn check(name: &'static str, results: impl IntoIterator<Item = bool>) -> Check {
    let (mut failures, mut total) = (0, 0);
    for ok in results {
        total += 1;
        failures += usize::from(!ok);
    }
    Check { name, failures, total }
}

fn golden() -> Check {
    let cases = [
        ("C(R(A,B),R(B,A))", ComplexityClass::CoNpComplete),
        ("C(R(A,B),R(A,B))", ComplexityClass::Fo),
        ("R(R(X(_)))", ComplexityClass::NlHardInLfp),
    ];
    check(
        "golden-classes",
        cases
            .iter()
            .map(|(text, class)| classify_tree(&TreeQuery::parse(text).unwrap()).class == *class),
    )
}

fn fig5() -> Check {
    let (q, db) = fig5_instance();
    let g = q.to_graph();
    check(
        "fig5",
        [
            db.len() == 12,
            db.repair_count() == 16,
            brute_certain(&g, &db, DEFAULT_CAP) == Ok(false),
        ],
    )
}

/// The condition report decomposes as expected and agrees with the direct
/// definitions; under the branch condition the preorder is total.
fn conditions(seed: u64, cases: usize) -> Check {
    let mut r = fuzz::rng(seed);
    let mut results = Vec::new();
    for _ in 0..cases {
        let q = fuzz::random_tree(&mut r, &TreeParams::default());
        let c = check_conditions(&q);
        results.push(c.c2 == (c.c_factor && c.c_branch) && c.c1 == (c.c_prefix && c.c_branch));
        results.push(c.c2 == c2_direct(&q) && c.c1 == c1_direct(&q));
        if c.c_branch {
            let le = |x, y| preorder_le(&q, x, y).unwrap_or(false);
            results.push(q.same_relation_pairs().iter().all(|&(x, y)| le(x, y) || le(y, x)));
        }
    }
    check("conditions", results)
}

fn engine(seed: u64, cases: usize) -> Vec<Check> {
    let corpus = fuzz::corpus(seed, cases, &TreeParams::default(), &DbParams::default(), |_, _| true);
    let mut auto = Vec::new();
    let mut fixpoint = Vec::new();
    let mut frugal = Vec::new();
    let mut forward = Vec::new();
    for case in &corpus {
        let (q, db) = (&case.query, &case.db);
        let truth = brute_certain(&q.to_graph(), db, DEFAULT_CAP).ok();
        auto.push(
            certain_with(q, db, Method::Auto, false, DEFAULT_CAP)
                .ok()
                .map(|a| a.value)
                == truth,
        );
        let report = check_conditions(q);
        if report.c2 {
            fixpoint.push(
                certain_with(q, db, Method::Fixpoint, false, DEFAULT_CAP)
                    .ok()
                    .map(|a| a.value)
                    == truth,
            );
            let r = frugal_repair(q, db).ok();
            frugal.push(r.map(|r| eval_cq(&q.to_graph(), &r).is_some()) == truth);
        }
        if report.c1 {
            let full = compute_b(q, db).map(|b| b.constants_at(q.root()).is_empty());
            let fwd = compute_b_forward(q, db).map(|b| b.constants_at(q.root()).is_empty());
            forward.push(full.is_ok() && full.ok() == fwd.ok());
        }
    }
    vec![
        check("auto-vs-oracle", auto),
        check("fixpoint-vs-oracle", fixpoint),
        check("frugal-vs-oracle", frugal),
        check("forward-vs-fixpoint", forward),
    ]
}

fn sat() -> Check {
    let q = TreeQuery::parse("C(R(A,B),R(B,A))").unwrap();
    let g = q.to_graph();
    check(
        "sat-gadget",
        MonotoneCnf::enumerate(2, 3).into_iter().map(|phi| {
            sat_gadget(&q, None, &phi)
                .ok()
                .and_then(|db| brute_certain(&g, &db, DEFAULT_CAP).ok())
                == Some(!phi.satisfiable())
        }),
    )
}

fn reach() -> Check {
    let q = TreeQuery::parse("R(R(X(_)))").unwrap();
    let g = q.to_graph();
    check(
        "reach-gadget",
        Digraph::enumerate_dags(3).into_iter().map(|d| {
            reach_gadget(&q, Vertex(0), Vertex(1), &d)
                .ok()
                .and_then(|db| brute_certain(&g, &db, DEFAULT_CAP).ok())
                == Some(!d.reachable())
        }),
    )
}

/// Runs every check and reports one line per check plus the overall verdict.
pub fn run(seed: u64, cases: usize) -> (Record, bool) {
    let mut checks = vec![golden(), fig5(), conditions(seed, cases)];
    checks.extend(engine(seed, cases));
    checks.push(sat());
    checks.push(reach());
    let mut rec = Record::default();
    rec.push("seed", seed);
    rec.push("cases", cases);
    let mut ok = true;
    for c in &checks {
        let verdict = if c.failures == 0 { "PASS" } else { "FAIL" };
        ok &= c.failures == 0;
        rec.push(
            format!("check.{}", c.name),
            format!("{verdict} {}/{}", c.total - c.failures, c.total),
        );
    }
    rec.push("result", if ok { "PASS" } else { "FAIL" });
    (rec, ok)
}
