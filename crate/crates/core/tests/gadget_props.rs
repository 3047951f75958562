use std::collections::BTreeMap;

use cqa_core::classification::sjf_version;
use cqa_core::fuzz::{self, TreeParams};
use cqa_core::gadgets::{
    canonical_copy, find_c2_witness, reach_gadget, sat_gadget, sjf_lift, Clause, Digraph, GadgetError, MonotoneCnf,
};
use cqa_core::homomorphism::{core, HomTable};
use cqa_core::oracle::{brute_certain, DEFAULT_CAP};
use cqa_core::{Database, Fact, TreeQuery, Vertex};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn witness_query(seed: u64) -> Option<TreeQuery> {
    let p = TreeParams {
        max_vertices: 7,
        constants: vec![],
        ..TreeParams::default()
    };
    fuzz::random_tree_where(&mut fuzz::rng(seed), &p, 300, |_, c| !c.report.c2)
}

fn random_cnf(rng: &mut impl Rng) -> MonotoneCnf {
    let vars = ["x1", "x2", "x3"];
    let clauses = (0..rng.gen_range(0..=3))
        .map(|_| {
            let k = rng.gen_range(1..=3);
            let mut lits: Vec<String> = vars.choose_multiple(rng, k).map(|s| s.to_string()).collect();
            lits.sort();
            Clause {
                positive: rng.gen_bool(0.5),
                literals: lits,
            }
        })
        .collect();
    MonotoneCnf::new(vec!["x1".into()], clauses).unwrap()
}

fn random_dag(rng: &mut impl Rng, n: usize) -> Digraph {
    let vertices: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut order = vertices.clone();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.35) {
                edges.push((order[i].clone(), order[j].clone()));
            }
        }
    }
    let s = vertices.choose(rng).unwrap().clone();
    let t = vertices.choose(rng).unwrap().clone();
    Digraph::new(vertices, edges, s, t).unwrap()
}

/// An ancestor pair of the same relation whose lower subtree does not
/// root-map into the upper one.
fn reach_pair(q: &TreeQuery) -> Option<(Vertex, Vertex)> {
    let table = HomTable::new(q, q);
    q.same_relation_pairs()
        .into_iter()
        .find(|&(x, y)| q.is_ancestor(x, y) && !table.feasible(y, x))
}

fn shared_key(q: &cqa_core::GraphQuery) -> bool {
    let atoms = q.atoms();
    atoms.iter().enumerate().any(|(i, a)| {
        atoms[i + 1..]
            .iter()
            .any(|b| a.relation == b.relation && a.key == b.key)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn sat_gadget_is_sound_for_random_witnesses(seed in any::<u64>()) {
        let Some(q) = witness_query(seed) else { return Ok(()) };
        let mut r = fuzz::rng(seed ^ 1);
        let phi = random_cnf(&mut r);
        let db = sat_gadget(&q, None, &phi).unwrap();
        prop_assert_eq!(brute_certain(&q.to_graph(), &db, DEFAULT_CAP).unwrap(), !phi.satisfiable(), "{} {}", q, phi);

        // Only the root relation (per clause) and the witness relation (per variable) have conflicts.
        let (p, _) = find_c2_witness(&q).unwrap();
        let root_rel = q.relation(q.root()).unwrap();
        let pair_rel = q.relation(p).unwrap();
        for (key, size) in db.inconsistent_blocks() {
            let rel = key.relation.as_str();
            prop_assert!(rel == root_rel || rel == pair_rel, "{} has a conflict", key.relation);
            prop_assert!(size >= 2);
        }
    }

    #[test]
    fn reach_gadget_is_sound_for_random_witnesses(seed in any::<u64>(), n in 1usize..=5) {
        let p = TreeParams { max_vertices: 7, constants: vec![], ..TreeParams::default() };
        let mut r = fuzz::rng(seed);
        let Some(q) = fuzz::random_tree_where(&mut r, &p, 300, |q, _| reach_pair(q).is_some()) else {
            return Ok(());
        };
        let (x, y) = reach_pair(&q).unwrap();
        let g = random_dag(&mut r, n);
        let db = reach_gadget(&q, x, y, &g).unwrap();
        prop_assert_eq!(brute_certain(&q.to_graph(), &db, DEFAULT_CAP).unwrap(), !g.reachable(), "{} {:?}", q, g);
        prop_assert!(db.inconsistent_blocks().iter().all(|(k, _)| Some(k.relation.as_str()) == q.relation(x)));
    }

    #[test]
    fn sjf_lift_preserves_certainty(seed in any::<u64>()) {
        let mut r = fuzz::rng(seed);
        let q = core(&fuzz::random_graph_query(&mut r, 3, 3));
        if shared_key(&q) {
            prop_assert!(sjf_lift(&q, &Database::new()).is_err());
            return Ok(());
        }
        let sjf = sjf_version(&q);
        let adom = ["a", "b", "c"];
        let mut facts: Vec<Fact> = Vec::new();
        if r.gen_bool(0.6) {
            let bind: BTreeMap<String, String> = BTreeMap::new();
            facts.extend(canonical_copy(&sjf, &bind, |v| format!("p.{v}")).unwrap());
        }
        for _ in 0..r.gen_range(0..6) {
            let atom = sjf.atoms().choose(&mut r).unwrap();
            let pick = |r: &mut fuzz::FuzzRng| adom.choose(r).unwrap().to_string();
            let key = atom.key.iter().map(|_| pick(&mut r)).collect();
            let rest = atom.rest.iter().map(|_| pick(&mut r)).collect();
            facts.push(Fact::new(atom.relation.clone(), key, rest));
        }
        let sjf_db = Database::from_facts(facts).unwrap();
        let lifted = sjf_lift(&q, &sjf_db).unwrap();
        prop_assert_eq!(lifted.len(), sjf_db.len());
        prop_assert_eq!(lifted.repair_count(), sjf_db.repair_count());
        prop_assert_eq!(
            brute_certain(&sjf, &sjf_db, DEFAULT_CAP).unwrap(),
            brute_certain(&q, &lifted, DEFAULT_CAP).unwrap(),
            "{} on\n{}", q, sjf_db
        );
    }
}

#[test]
fn reach_gadget_on_all_small_dags() {
    let q = TreeQuery::parse("R(R(X(_)))").unwrap();
    for g in Digraph::enumerate_dags(3) {
        let db = reach_gadget(&q, Vertex(0), Vertex(1), &g).unwrap();
        assert_eq!(
            brute_certain(&q.to_graph(), &db, DEFAULT_CAP).unwrap(),
            !g.reachable(),
            "{g:?}"
        );
    }
}

#[test]
fn sat_gadget_on_all_two_variable_formulas() {
    let q = TreeQuery::parse("C(R(A,B),R(B,A))").unwrap();
    for phi in MonotoneCnf::enumerate(2, 3) {
        let db = sat_gadget(&q, None, &phi).unwrap();
        assert_eq!(
            brute_certain(&q.to_graph(), &db, DEFAULT_CAP).unwrap(),
            !phi.satisfiable(),
            "{phi}"
        );
    }
}

#[test]
fn sjf_lift_rejects_shared_keys() {
    let q = cqa_core::GraphQuery::parse("S(x; x), R(x; y, y), S(x; y)").unwrap();
    assert_eq!(core(&q).len(), 3);
    assert!(matches!(sjf_lift(&q, &Database::new()), Err(GadgetError::SharedKey(r)) if r == "S"));
}
