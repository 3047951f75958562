//! The certain-answer fixpoint over pairs `⟨c, y⟩`, its forward-only variant,
//! frugal repairs, and the top-level decision procedure.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::classification::{classify_tree, ComplexityClass, TreeClassification};
use crate::model::{BlockKey, Database, Fact, Label, Signature, TreeQuery, Vertex};
use crate::oracle::{brute_certain, eval_cq, OracleError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("relation `{relation}` is {query} in the query but {database} in the database (key arity/arity)")]
    SchemaMismatch {
        relation: String,
        query: Signature,
        database: Signature,
    },
    #[error("vertex {0} is not an internal vertex of the query")]
    NotInternal(Vertex),
    #[error("fact relation `{fact}` does not match vertex relation `{vertex}`")]
    LabelMismatch { fact: String, vertex: String },
    #[error("frugal sets in block {0} are not comparable")]
    Incomparable(BlockKey),
    #[error("method `{method}` needs {condition}, which the query violates (use --force to run anyway)")]
    Precondition { method: Method, condition: &'static str },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Signature each relation of the query expects in a database.
fn expected_schema(q: &TreeQuery) -> BTreeMap<String, Signature> {
    q.schema()
        .into_iter()
        .map(|(r, n)| {
            (
                r,
                Signature {
                    key_arity: 1,
                    arity: n + 1,
                },
            )
        })
        .collect()
}

/// Fails when a relation is used with different signatures by `q` and `db`.
pub fn check_schema(q: &TreeQuery, db: &Database) -> Result<(), EngineError> {
    for (rel, want) in expected_schema(q) {
        if let Some(&have) = db.schema().get(&rel) {
            if have != want {
                return Err(EngineError::SchemaMismatch {
                    relation: rel,
                    query: want,
                    database: have,
                });
            }
        }
    }
    Ok(())
}

/// The set `B` of pairs `⟨c, v⟩`, each with the round in which it entered.
/// Round 0 is initialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertMemo {
    constants: Vec<String>,
    index: HashMap<String, usize>,
    entered: Vec<Vec<Option<u32>>>,
    rounds: u32,
}

impl CertMemo {
    pub fn contains(&self, c: &str, v: Vertex) -> bool {
        self.round(c, v).is_some()
    }

    pub fn round(&self, c: &str, v: Vertex) -> Option<u32> {
        let &i = self.index.get(c)?;
        self.entered.get(v.0)?[i]
    }

    /// Number of rounds after initialization that added pairs.
    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn len(&self) -> usize {
        self.entered.iter().flatten().filter(|r| r.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pairs(&self) -> BTreeSet<(String, Vertex)> {
        let mut out = BTreeSet::new();
        for (v, row) in self.entered.iter().enumerate() {
            for (i, r) in row.iter().enumerate() {
                if r.is_some() {
                    out.insert((self.constants[i].clone(), Vertex(v)));
                }
            }
        }
        out
    }

    /// Constants `c` with `⟨c, v⟩` in the set, in order.
    pub fn constants_at(&self, v: Vertex) -> Vec<&str> {
        self.entered[v.0]
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_some())
            .map(|(i, _)| self.constants[i].as_str())
            .collect()
    }

    fn forward(&self, q: &TreeQuery, rest: &[String], z: Vertex) -> bool {
        let kids = q.children(z);
        kids.len() == rest.len() && kids.iter().zip(rest).all(|(&k, d)| self.contains(d, k))
    }

    /// The predicate `fact(f, y)`: the forward conjunction holds at `y` or at
    /// some same-relation ancestor of `y`.
    pub fn fact_holds(&self, q: &TreeQuery, f: &Fact, y: Vertex) -> Result<bool, EngineError> {
        let rel = q.relation(y).ok_or(EngineError::NotInternal(y))?;
        if rel != f.relation {
            return Err(EngineError::LabelMismatch {
                fact: f.relation.clone(),
                vertex: rel.to_string(),
            });
        }
        Ok(std::iter::once(y)
            .chain(q.same_relation_ancestors(y))
            .any(|z| self.forward(q, &f.rest, z)))
    }

    /// Same as [`CertMemo::fact_holds`] without the backward disjunction.
    pub fn fact_holds_forward(&self, q: &TreeQuery, f: &Fact, y: Vertex) -> bool {
        q.relation(y) == Some(f.relation.as_str()) && self.forward(q, &f.rest, y)
    }
}

/// `fact(f, y)` evaluated against `b`.
pub fn fact_holds(q: &TreeQuery, db: &Database, b: &CertMemo, f: &Fact, y: Vertex) -> Result<bool, EngineError> {
    check_schema(q, db)?;
    b.fact_holds(q, f, y)
}

struct Block {
    key: usize,
    facts: Vec<Vec<usize>>,
}

/// Runs the fixpoint; with `forward_only` the backward disjunction is dropped.
fn run(q: &TreeQuery, db: &Database, forward_only: bool) -> Result<CertMemo, EngineError> {
    check_schema(q, db)?;
    let constants: Vec<String> = db.adom().iter().cloned().collect();
    let index: HashMap<String, usize> = constants.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    let n = constants.len();

    let relations: BTreeSet<&str> = q.internal_vertices().filter_map(|v| q.relation(v)).collect();
    let mut blocks: Vec<Block> = Vec::new();
    let mut block_rel: Vec<&str> = Vec::new();
    // (relation, position, constant) -> blocks with a fact carrying it there.
    let mut uses: HashMap<(&str, usize, usize), Vec<usize>> = HashMap::new();
    let mut by_rel: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut unary: HashSet<(&str, usize)> = HashSet::new();
    for (k, facts) in db.blocks() {
        let rel = k.relation.as_str();
        if k.key.len() != 1 {
            continue;
        }
        let key = index[&k.key[0]];
        if facts.iter().all(|f| f.rest.is_empty()) {
            unary.insert((rel, key));
        }
        if !relations.contains(rel) {
            continue;
        }
        let id = blocks.len();
        let facts: Vec<Vec<usize>> = facts
            .iter()
            .map(|f| f.rest.iter().map(|d| index[d]).collect())
            .collect();
        for f in &facts {
            for (i, &d) in f.iter().enumerate() {
                let e = uses.entry((rel, i, d)).or_default();
                if e.last() != Some(&id) {
                    e.push(id);
                }
            }
        }
        blocks.push(Block { key, facts });
        block_rel.push(rel);
        by_rel.entry(rel).or_default().push(id);
    }

    // Vertices whose fact predicate reads the forward conjunction at `p`.
    let readers: Vec<Vec<Vertex>> = q
        .vertices()
        .map(|p| {
            if !q.is_internal(p) {
                Vec::new()
            } else if forward_only {
                vec![p]
            } else {
                q.internal_vertices()
                    .filter(|&z| q.relation(z) == q.relation(p) && (z == p || q.is_ancestor(p, z)))
                    .collect()
            }
        })
        .collect();
    let chains: Vec<Vec<Vertex>> = q
        .vertices()
        .map(|y| {
            let mut c = vec![y];
            if !forward_only {
                c.extend(q.same_relation_ancestors(y));
            }
            c
        })
        .collect();

    let mut entered: Vec<Vec<Option<u32>>> = vec![vec![None; n]; q.len()];
    for v in q.vertices() {
        match q.label(v) {
            Label::Bottom => entered[v.0].iter_mut().for_each(|r| *r = Some(0)),
            Label::Constant(c) => {
                if let Some(&i) = index.get(c) {
                    entered[v.0][i] = Some(0);
                }
            }
            Label::Unary(a) => {
                for (i, slot) in entered[v.0].iter_mut().enumerate() {
                    if unary.contains(&(a.as_str(), i)) {
                        *slot = Some(0);
                    }
                }
            }
            Label::Relation(_) => {}
        }
    }

    let forward = |entered: &Vec<Vec<Option<u32>>>, fact: &[usize], z: Vertex| {
        q.children(z).iter().zip(fact).all(|(&k, &d)| entered[k.0][d].is_some())
    };
    let block_ok = |entered: &Vec<Vec<Option<u32>>>, b: usize, y: Vertex| {
        !blocks[b].facts.is_empty()
            && blocks[b]
                .facts
                .iter()
                .all(|f| chains[y.0].iter().any(|&z| forward(entered, f, z)))
    };

    let mut candidates: Vec<(usize, Vertex)> = q
        .internal_vertices()
        .flat_map(|y| {
            by_rel
                .get(q.relation(y).expect("internal"))
                .into_iter()
                .flatten()
                .map(move |&b| (b, y))
        })
        .collect();
    let mut round = 0u32;
    loop {
        let mut seen = HashSet::new();
        let added: Vec<(usize, Vertex)> = candidates
            .iter()
            .filter(|&&(b, y)| seen.insert((b, y)))
            .filter(|&&(b, y)| entered[y.0][blocks[b].key].is_none() && block_ok(&entered, b, y))
            .map(|&(b, y)| (blocks[b].key, y))
            .collect();
        if added.is_empty() {
            break;
        }
        round += 1;
        candidates.clear();
        for &(c, v) in &added {
            if entered[v.0][c].is_some() {
                continue;
            }
            entered[v.0][c] = Some(round);
        }
        for &(c, v) in &added {
            let Some(p) = q.parent(v) else { continue };
            let rel = q.relation(p).expect("parents are internal");
            if let Some(bs) = uses.get(&(rel, q.child_index(v), c)) {
                for &b in bs {
                    for &z in &readers[p.0] {
                        candidates.push((b, z));
                    }
                }
            }
        }
    }
    Ok(CertMemo {
        constants,
        index,
        entered,
        rounds: round,
    })
}

/// Least fixpoint of the initialization and the iterative rule.
pub fn compute_b(q: &TreeQuery, db: &Database) -> Result<CertMemo, EngineError> {
    run(q, db, false)
}

/// The fixpoint with the backward disjunction removed.
pub fn compute_b_forward(q: &TreeQuery, db: &Database) -> Result<CertMemo, EngineError> {
    run(q, db, true)
}

/// Least constant `c` with `⟨c, root⟩ ∈ B`.
pub fn certain_trace_witness(q: &TreeQuery, db: &Database) -> Result<Option<String>, EngineError> {
    let b = compute_b(q, db)?;
    Ok(b.constants_at(q.root()).first().map(|c| c.to_string()))
}

/// Whether some constant starts an accepted tree set in every repair.
pub fn certain_trace(q: &TreeQuery, db: &Database) -> Result<bool, EngineError> {
    Ok(certain_trace_witness(q, db)?.is_some())
}

/// A fact with its frugal set: the same-relation vertices `x` with `fact(f, x)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrugalSet {
    pub fact: Fact,
    pub atoms: BTreeSet<Vertex>,
}

/// Frugal sets of every fact, grouped by block.
pub fn frugal_sets(q: &TreeQuery, db: &Database, b: &CertMemo) -> Vec<(BlockKey, Vec<FrugalSet>)> {
    let by_rel: BTreeMap<&str, Vec<Vertex>> = q.internal_vertices().fold(BTreeMap::new(), |mut m, v| {
        m.entry(q.relation(v).expect("internal")).or_default().push(v);
        m
    });
    db.blocks()
        .map(|(k, facts)| {
            let sets = facts
                .iter()
                .map(|f| FrugalSet {
                    fact: f.clone(),
                    atoms: by_rel
                        .get(f.relation.as_str())
                        .into_iter()
                        .flatten()
                        .copied()
                        .filter(|&x| b.fact_holds(q, f, x).expect("same relation"))
                        .collect(),
                })
                .collect();
            (k.clone(), sets)
        })
        .collect()
}

/// A repair picking, per block, the least fact whose frugal set is
/// ⊆-minimal. Fails if two frugal sets in one block are incomparable.
pub fn frugal_repair(q: &TreeQuery, db: &Database) -> Result<Database, EngineError> {
    let b = compute_b(q, db)?;
    let mut chosen = Vec::new();
    for (key, sets) in frugal_sets(q, db, &b) {
        for (i, s) in sets.iter().enumerate() {
            for t in &sets[i + 1..] {
                if !s.atoms.is_subset(&t.atoms) && !t.atoms.is_subset(&s.atoms) {
                    return Err(EngineError::Incomparable(key));
                }
            }
        }
        let min = sets.iter().min_by_key(|s| s.atoms.len()).expect("blocks are non-empty");
        chosen.push(min.fact.clone());
    }
    Ok(Database::from_facts(chosen).expect("subset of a database"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Auto,
    Fixpoint,
    Forward,
    Oracle,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Auto => "auto",
            Method::Fixpoint => "fixpoint",
            Method::Forward => "forward",
            Method::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodUsed {
    Fixpoint,
    ForwardOnly,
    Oracle,
}

impl fmt::Display for MethodUsed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodUsed::Fixpoint => "fixpoint",
            MethodUsed::ForwardOnly => "forward",
            MethodUsed::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertainAnswer {
    pub value: bool,
    pub method: MethodUsed,
    /// A constant starting an accepted tree set in every repair (fixpoint methods only).
    pub witness: Option<String>,
    pub class: ComplexityClass,
    /// Fixpoint rounds after initialization (fixpoint methods only).
    pub rounds: Option<u32>,
}

/// Decides whether every repair of `db` satisfies `q`, choosing the method from
/// the query's class.
pub fn certain(q: &TreeQuery, db: &Database, oracle_cap: u128) -> Result<CertainAnswer, EngineError> {
    certain_with(q, db, Method::Auto, false, oracle_cap)
}

/// Like [`certain`] with an explicit method. Unless `force` is set, the
/// forward method requires C1 and the fixpoint method requires C2.
pub fn certain_with(
    q: &TreeQuery,
    db: &Database,
    method: Method,
    force: bool,
    oracle_cap: u128,
) -> Result<CertainAnswer, EngineError> {
    check_schema(q, db)?;
    let TreeClassification { class, report } = classify_tree(q);
    let used = match method {
        Method::Auto if report.c1 => MethodUsed::ForwardOnly,
        Method::Auto if report.c2 => MethodUsed::Fixpoint,
        Method::Auto | Method::Oracle => MethodUsed::Oracle,
        Method::Forward => {
            if !report.c1 && !force {
                return Err(EngineError::Precondition {
                    method,
                    condition: "C1",
                });
            }
            MethodUsed::ForwardOnly
        }
        Method::Fixpoint => {
            if !report.c2 && !force {
                return Err(EngineError::Precondition {
                    method,
                    condition: "C2",
                });
            }
            MethodUsed::Fixpoint
        }
    };
    let (value, witness, rounds) = match used {
        MethodUsed::Oracle => (brute_certain(&q.to_graph(), db, oracle_cap)?, None, None),
        MethodUsed::Fixpoint | MethodUsed::ForwardOnly => {
            let b = if used == MethodUsed::Fixpoint {
                compute_b(q, db)?
            } else {
                compute_b_forward(q, db)?
            };
            let w = b.constants_at(q.root()).first().map(|c| c.to_string());
            (w.is_some(), w, Some(b.rounds()))
        }
    };
    Ok(CertainAnswer {
        value,
        method: used,
        witness,
        class,
        rounds,
    })
}

/// Evaluates `q` on the frugal repair of `db`.
pub fn frugal_eval(q: &TreeQuery, db: &Database) -> Result<bool, EngineError> {
    let r = frugal_repair(q, db)?;
    Ok(eval_cq(&q.to_graph(), &r).is_some())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::DEFAULT_CAP;

    fn t(s: &str) -> TreeQuery {
        TreeQuery::parse(s).unwrap()
    }

    fn db(lines: &[&str]) -> Database {
        Database::from_facts(lines.iter().map(|l| Fact::parse(l).unwrap())).unwrap()
    }

    fn f(s: &str) -> Fact {
        Fact::parse(s).unwrap()
    }

    const RRX: &str = "R(R(X(_)))";

    #[test]
    fn chain_fixpoint() {
        let q = t(RRX);
        let d = db(&["R(a;b)", "R(b;c)", "X(c;d)"]);
        let b = compute_b(&q, &d).unwrap();
        assert!(b.contains("a", Vertex(0)));
        assert!(b.contains("b", Vertex(1)));
        assert!(b.contains("c", Vertex(2)));
        for c in ["a", "b", "c", "d"] {
            assert_eq!(b.round(c, Vertex(3)), Some(0));
        }
        assert_eq!(b.round("c", Vertex(2)), Some(1));
        assert_eq!(b.round("b", Vertex(1)), Some(2));
        assert_eq!(b.round("a", Vertex(0)), Some(3));
        assert_eq!(b.rounds(), 3);
        assert!(certain_trace(&q, &d).unwrap());
        assert_eq!(certain_trace_witness(&q, &d).unwrap().as_deref(), Some("a"));
    }

    #[test]
    fn fact_predicate() {
        let q = t(RRX);
        let d = db(&["R(a;b)", "R(b;c)", "X(c;d)"]);
        let b = compute_b(&q, &d).unwrap();
        assert!(b.fact_holds(&q, &f("R(b;c)"), Vertex(1)).unwrap());
        // Backward: at x1 the fact R(a;b) is read at x0, needing ⟨b, x1⟩.
        assert!(b.fact_holds(&q, &f("R(a;b)"), Vertex(1)).unwrap());
        assert!(!b.fact_holds_forward(&q, &f("R(a;b)"), Vertex(1)));
        assert!(!b.fact_holds(&q, &f("R(c;d)"), Vertex(0)).unwrap());
        assert!(matches!(
            b.fact_holds(&q, &f("X(c;d)"), Vertex(0)),
            Err(EngineError::LabelMismatch { .. })
        ));
        assert_eq!(
            b.fact_holds(&q, &f("X(c;d)"), Vertex(3)),
            Err(EngineError::NotInternal(Vertex(3)))
        );
        assert!(fact_holds(&q, &d, &b, &f("R(b;c)"), Vertex(1)).unwrap());
    }

    #[test]
    fn block_with_dead_end_blocks_the_root() {
        let q = t(RRX);
        let d = db(&["R(a;b)", "R(a;b2)", "R(b;c)", "X(c;d)"]);
        let b = compute_b(&q, &d).unwrap();
        assert!(!b.contains("a", Vertex(0)));
        assert!(!certain_trace(&q, &d).unwrap());
    }

    #[test]
    fn empty_database() {
        let q = t(RRX);
        assert!(compute_b(&q, &Database::new()).unwrap().is_empty());
        assert!(compute_b_forward(&q, &Database::new()).unwrap().is_empty());
        assert!(!certain_trace(&q, &Database::new()).unwrap());
    }

    #[test]
    fn cycle_without_x() {
        let q = t(RRX);
        assert!(!certain_trace(&q, &db(&["R(a;b)", "R(b;a)"])).unwrap());
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        let q = t(RRX);
        let d = db(&["R(a;b,c)"]);
        assert!(matches!(compute_b(&q, &d), Err(EngineError::SchemaMismatch { .. })));
        assert!(matches!(certain(&q, &d, 10), Err(EngineError::SchemaMismatch { .. })));
    }

    #[test]
    fn frugal_repair_examples() {
        let q = t(RRX);
        let d = db(&["R(a;b)", "R(b;c)", "X(c;d)"]);
        assert_eq!(frugal_repair(&q, &d).unwrap(), d);

        let d = db(&["R(a;b)", "R(a;b2)", "R(b;c)", "X(c;d)"]);
        let r = frugal_repair(&q, &d).unwrap();
        assert!(r.contains(&f("R(a;b2)")));
        assert!(!frugal_eval(&q, &d).unwrap());
    }

    #[test]
    fn frugal_sets_are_minimized() {
        let q = t("C(R(A,B),R(A,B))");
        let d = db(&["C(c;x,x)", "R(x;a,b)", "R(x;b,a)", "A(a)", "B(b)"]);
        let b = compute_b(&q, &d).unwrap();
        let sets = frugal_sets(&q, &d, &b);
        let r_block = &sets.iter().find(|(k, _)| k.relation == "R").unwrap().1;
        assert_eq!(r_block[0].fact, f("R(x;a,b)"));
        assert_eq!(r_block[0].atoms, BTreeSet::from([Vertex(1), Vertex(4)]));
        assert!(r_block[1].atoms.is_empty());
        let r = frugal_repair(&q, &d).unwrap();
        assert!(r.contains(&f("R(x;b,a)")));
    }

    #[test]
    fn incomparable_sets_are_reported() {
        let q = t("C(R(A,B),R(B,A))");
        let d = db(&["C(c;x,x)", "R(x;a,b)", "R(x;b,a)", "A(a)", "B(b)"]);
        assert!(matches!(frugal_repair(&q, &d), Err(EngineError::Incomparable(_))));
    }

    #[test]
    fn certain_picks_methods() {
        let q = t(RRX);
        let d = db(&["R(a;b)", "R(b;c)", "X(c;d)"]);
        let a = certain(&q, &d, DEFAULT_CAP).unwrap();
        assert!(a.value);
        assert_eq!(a.method, MethodUsed::Fixpoint);
        assert_eq!(a.witness.as_deref(), Some("a"));
        assert_eq!(a.class, ComplexityClass::NlHardInLfp);

        let q = t("C(R(A,_),S(B))");
        let d = db(&["C(c;y,z)", "R(y;u,v)", "S(z;w)", "A(u)", "B(w)"]);
        let a = certain(&q, &d, DEFAULT_CAP).unwrap();
        assert!(a.value);
        assert_eq!(a.method, MethodUsed::ForwardOnly);

        let q = t("C(R(A,B),R(B,A))");
        let d = db(&["C(c;y,z)", "R(y;u,v)", "R(z;v,u)", "A(u)", "B(v)"]);
        let a = certain(&q, &d, DEFAULT_CAP).unwrap();
        assert!(a.value);
        assert_eq!(a.method, MethodUsed::Oracle);
    }

    #[test]
    fn method_guards() {
        let q = t(RRX);
        let d = db(&["R(a;b)"]);
        assert!(matches!(
            certain_with(&q, &d, Method::Forward, false, 10),
            Err(EngineError::Precondition { .. })
        ));
        assert!(certain_with(&q, &d, Method::Forward, true, 10).is_ok());
        let q = t("C(R(A,B),R(B,A))");
        assert!(matches!(
            certain_with(&q, &Database::new(), Method::Fixpoint, false, 10),
            Err(EngineError::Precondition { .. })
        ));
        let big = db(&["R(a;b)", "R(a;c)", "R(b;a)", "R(b;c)"]);
        assert!(matches!(
            certain_with(&t(RRX), &big, Method::Oracle, false, 3),
            Err(EngineError::Oracle(_))
        ));
    }

    #[test]
    fn forward_only_stabilizes_within_depth() {
        let q = t("C(R(A,_),S(B))");
        let d = db(&["C(c;y,z)", "R(y;u,v)", "S(z;w)", "A(u)", "B(w)", "C(c;y,y)"]);
        let b = compute_b_forward(&q, &d).unwrap();
        assert!(b.rounds() as usize <= q.to_tree().depth());
    }
}
