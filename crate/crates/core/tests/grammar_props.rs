use std::collections::BTreeSet;

use cqa_core::classification::{check_conditions, rewind, Condition};
use cqa_core::engine::compute_b;
use cqa_core::fuzz::{self, DbParams, TreeParams};
use cqa_core::grammar::{build_cfg, TreeCfg};
use cqa_core::homomorphism::tree_hom_exists;
use cqa_core::{Database, Label, RelTree, TreeQuery, Vertex};
use proptest::prelude::*;

fn tree(seed: u64) -> TreeQuery {
    fuzz::random_tree(&mut fuzz::rng(seed), &TreeParams::default())
}

/// A consistent database: one random fact kept per block.
fn consistent_db(seed: u64, q: &TreeQuery) -> Database {
    let mut r = fuzz::rng(seed);
    let dp = DbParams {
        adom: 4,
        ..DbParams::default()
    };
    let db = fuzz::random_db(&mut r, q, &dp);
    Database::from_facts(db.blocks().map(|(_, b)| b[seed as usize % b.len()].clone())).unwrap()
}

/// Naive iteration of the derivation rules read top-down: `(c, u)` holds when
/// `S_u` (or a backward target of it) matches a fact keyed by `c` whose
/// arguments hold at the children. Iterated until nothing changes.
fn naive_acceptance(g: &TreeCfg, r: &Database) -> BTreeSet<(String, Vertex)> {
    let q = g.query();
    let holds = |set: &BTreeSet<(String, Vertex)>, c: &str, u: Vertex| match q.label(u) {
        Label::Bottom => true,
        Label::Constant(k) => k == c,
        _ => set.contains(&(c.to_string(), u)),
    };
    let mut set = BTreeSet::new();
    loop {
        let mut next = set.clone();
        for u in q.vertices() {
            for c in r.adom() {
                let ok = match q.label(u) {
                    Label::Unary(a) => r
                        .facts()
                        .any(|f| &f.relation == a && f.key == [c.clone()] && f.rest.is_empty()),
                    Label::Relation(rel) => std::iter::once(u)
                        .chain(g.backward_targets(u).iter().copied())
                        .any(|z| {
                            r.facts().any(|f| {
                                &f.relation == rel
                                    && f.key == [c.clone()]
                                    && f.rest.len() == q.children(z).len()
                                    && q.children(z).iter().zip(&f.rest).all(|(&k, d)| holds(&set, d, k))
                            })
                        }),
                    _ => false,
                };
                if ok {
                    next.insert((c.clone(), u));
                }
            }
        }
        if next == set {
            return set;
        }
        set = next;
    }
}

/// Whether `tau` is realized in `r` starting at `c`.
fn realized(tau: &RelTree, c: &str, r: &Database) -> bool {
    match tau {
        RelTree::Bottom => true,
        RelTree::Constant(k) => k == c,
        RelTree::Unary(a) => r.facts().any(|f| &f.relation == a && f.key == [c.to_string()]),
        RelTree::Node(rel, kids) => r.facts().any(|f| {
            &f.relation == rel
                && f.key == [c.to_string()]
                && f.rest.len() == kids.len()
                && kids.iter().zip(&f.rest).all(|(t, d)| realized(t, d, r))
        }),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn query_is_in_its_own_language(seed in any::<u64>()) {
        let q = tree(seed);
        prop_assert!(build_cfg(&q).accepts(&q.to_tree()).unwrap());
    }

    #[test]
    fn factor_condition_governs_language(seed in any::<u64>()) {
        let q = tree(seed);
        let g = build_cfg(&q);
        let report = check_conditions(&q);
        if report.c_factor {
            for tau in g.language(q.root(), q.to_tree().depth() + 2, 200) {
                let t = TreeQuery::from_tree(&tau).unwrap();
                prop_assert!(tree_hom_exists(&q, &t), "{} does not map into {}", q, t);
            }
        } else {
            let w = report.witnesses_for(Condition::Factor).next().unwrap();
            let rewound = rewind(&q, w.y, w.x).unwrap();
            prop_assert!(g.accepts(&rewound.to_tree()).unwrap());
            prop_assert!(!tree_hom_exists(&q, &rewound));
        }
    }

    #[test]
    fn acceptance_matches_naive_iteration(seed in any::<u64>()) {
        let q = tree(seed);
        let r = consistent_db(seed ^ 0x5eed, &q);
        let g = build_cfg(&q);
        let acc = g.acceptance(&r).unwrap();
        let naive = naive_acceptance(&g, &r);
        for u in q.vertices() {
            for c in r.adom() {
                let expect = match q.label(u) {
                    Label::Bottom => true,
                    Label::Constant(k) => k == c,
                    _ => naive.contains(&(c.clone(), u)),
                };
                prop_assert_eq!(g.accepts_in_consistent(u, c, &r).unwrap(), expect);
                prop_assert_eq!(acc.holds(&q, c, u), expect);
            }
        }
    }

    #[test]
    fn derivable_trees_found_in_database_are_accepted(seed in any::<u64>()) {
        let q = tree(seed);
        let r = consistent_db(seed ^ 0xface, &q);
        let g = build_cfg(&q);
        let u = q.root();
        for tau in g.language(u, q.to_tree().depth() + 2, 100) {
            for c in r.adom() {
                if realized(&tau, c, &r) {
                    prop_assert!(g.accepts_in_consistent(u, c, &r).unwrap());
                }
            }
        }
    }

    #[test]
    fn acceptance_matches_fixpoint_on_consistent_databases(seed in any::<u64>()) {
        let q = tree(seed);
        let r = consistent_db(seed ^ 0xbead, &q);
        let g = build_cfg(&q);
        let b = compute_b(&q, &r).unwrap();
        for u in q.vertices() {
            for c in r.adom() {
                prop_assert_eq!(g.accepts_in_consistent(u, c, &r).unwrap(), b.contains(c, u), "{} at {} {}", q, c, u);
            }
        }
    }
}
