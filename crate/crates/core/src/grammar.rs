//! The tree grammar of a rooted tree query: derivation checks on explicit
//! trees and acceptance over consistent databases.
//!
//! Nonterminals are the vertices of the query. A constant vertex stands for the
//! nonterminal of its constant, so two vertices carrying the same constant
//! behave identically.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::model::{Database, Label, ModelError, RelTree, TreeQuery, Vertex};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("tree does not fit the query schema: {0}")]
    Schema(ModelError),
    #[error("relation `{relation}` has {expected} children in the query but {found} in the tree")]
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },
    #[error("start vertex {0} does not exist")]
    UnknownVertex(Vertex),
    #[error("acceptance is only defined on consistent databases")]
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    /// `S_y → R(S_y1, ..., S_yn)`
    Forward {
        from: Vertex,
        relation: String,
        children: Vec<Vertex>,
    },
    /// `S_y → S_x` for a same-relation ancestor `x` of `y`.
    Backward { from: Vertex, to: Vertex },
    /// `S_u → L` for a unary leaf, `S_u → ⊥`, or `S_c → c`.
    Terminal { from: Vertex, label: Label },
}

#[derive(Debug, Clone)]
pub struct TreeCfg {
    q: TreeQuery,
    /// Per vertex, its strict same-relation ancestors (targets of its backward rules).
    backward: Vec<Vec<Vertex>>,
}

pub fn build_cfg(q: &TreeQuery) -> TreeCfg {
    TreeCfg {
        q: q.clone(),
        backward: q.vertices().map(|v| q.same_relation_ancestors(v)).collect(),
    }
}

impl TreeCfg {
    pub fn query(&self) -> &TreeQuery {
        &self.q
    }

    pub fn start(&self) -> Vertex {
        self.q.root()
    }

    pub fn backward_targets(&self, v: Vertex) -> &[Vertex] {
        &self.backward[v.0]
    }

    pub fn rules(&self) -> Vec<Rule> {
        let mut rules = Vec::new();
        for v in self.q.vertices() {
            match self.q.label(v) {
                Label::Relation(r) => {
                    rules.push(Rule::Forward {
                        from: v,
                        relation: r.clone(),
                        children: self.q.children(v).to_vec(),
                    });
                    for &x in &self.backward[v.0] {
                        rules.push(Rule::Backward { from: v, to: x });
                    }
                }
                l => rules.push(Rule::Terminal {
                    from: v,
                    label: l.clone(),
                }),
            }
        }
        rules
    }

    fn check_tree(&self, tau: &RelTree) -> Result<(), GrammarError> {
        let schema = tau.schema().map_err(GrammarError::Schema)?;
        let qs = self.q.schema();
        for (rel, &found) in &schema {
            if let Some(&expected) = qs.get(rel) {
                if expected != found {
                    return Err(GrammarError::ArityMismatch {
                        relation: rel.clone(),
                        expected,
                        found,
                    });
                }
            }
        }
        Ok(())
    }

    /// Whether `S_start` derives `tau`.
    pub fn derives(&self, start: Vertex, tau: &RelTree) -> Result<bool, GrammarError> {
        if !self.q.contains(start) {
            return Err(GrammarError::UnknownVertex(start));
        }
        self.check_tree(tau)?;
        let arena = Arena::new(tau);
        let mut memo = HashMap::new();
        Ok(self.derives_at(start, &arena, 0, &mut memo))
    }

    /// Whether the start symbol derives `tau`.
    pub fn accepts(&self, tau: &RelTree) -> Result<bool, GrammarError> {
        self.derives(self.start(), tau)
    }

    fn derives_at(&self, v: Vertex, arena: &Arena, node: usize, memo: &mut HashMap<(usize, usize), bool>) -> bool {
        if let Some(&b) = memo.get(&(v.0, node)) {
            return b;
        }
        let q = &self.q;
        let result = match (&arena.labels[node], q.label(v)) {
            (Label::Relation(r), Label::Relation(_)) => {
                let kids = &arena.children[node];
                std::iter::once(v)
                    .chain(self.backward[v.0].iter().copied())
                    .filter(|&z| q.relation(z) == Some(r.as_str()) && q.children(z).len() == kids.len())
                    .any(|z| {
                        q.children(z)
                            .iter()
                            .zip(kids)
                            .all(|(&c, &k)| self.derives_at(c, arena, k, memo))
                    })
            }
            (Label::Relation(_), _) => false,
            (t, l) => t == l,
        };
        memo.insert((v.0, node), result);
        result
    }

    /// Trees derivable from `S_start` with at most `max_depth` levels of
    /// internal vertices, stopping after `limit` trees.
    pub fn language(&self, start: Vertex, max_depth: usize, limit: usize) -> Vec<RelTree> {
        let mut out = self.expand(start, max_depth, limit);
        out.truncate(limit);
        out
    }

    fn expand(&self, v: Vertex, depth: usize, limit: usize) -> Vec<RelTree> {
        let q = &self.q;
        match q.label(v) {
            Label::Relation(r) => {
                if depth == 0 {
                    return Vec::new();
                }
                let mut out = Vec::new();
                for z in std::iter::once(v).chain(self.backward[v.0].iter().copied()) {
                    let options: Vec<Vec<RelTree>> = q
                        .children(z)
                        .iter()
                        .map(|&c| self.expand(c, depth - 1, limit))
                        .collect();
                    if options.iter().any(Vec::is_empty) {
                        continue;
                    }
                    let mut idx = vec![0usize; options.len()];
                    loop {
                        let kids = idx.iter().zip(&options).map(|(&i, o)| o[i].clone()).collect();
                        let t = RelTree::Node(r.clone(), kids);
                        if !out.contains(&t) {
                            out.push(t);
                            if out.len() >= limit {
                                return out;
                            }
                        }
                        let mut k = 0;
                        while k < idx.len() {
                            idx[k] += 1;
                            if idx[k] < options[k].len() {
                                break;
                            }
                            idx[k] = 0;
                            k += 1;
                        }
                        if k == idx.len() {
                            break;
                        }
                    }
                }
                out
            }
            Label::Unary(a) => vec![RelTree::Unary(a.clone())],
            Label::Constant(c) => vec![RelTree::Constant(c.clone())],
            Label::Bottom => vec![RelTree::Bottom],
        }
    }

    /// Whether some rooted tree set in the consistent database `r` starting
    /// in `c` is derivable from `S_u`.
    pub fn accepts_in_consistent(&self, u: Vertex, c: &str, r: &Database) -> Result<bool, GrammarError> {
        if !self.q.contains(u) {
            return Err(GrammarError::UnknownVertex(u));
        }
        let acc = self.acceptance(r)?;
        Ok(acc.holds(&self.q, c, u))
    }

    /// The least set of pairs `(c, u)` such that `S_u` accepts a rooted tree
    /// set in `r` starting in `c`.
    pub fn acceptance(&self, r: &Database) -> Result<Acceptance, GrammarError> {
        if !r.is_consistent() {
            return Err(GrammarError::Inconsistent);
        }
        let q = &self.q;
        // Facts by (relation, key) and by (relation, position, value).
        let mut by_key: BTreeMap<(&str, &str), &[String]> = BTreeMap::new();
        let mut uses: BTreeMap<(&str, usize, &str), Vec<&str>> = BTreeMap::new();
        let mut unary: BTreeSet<(&str, &str)> = BTreeSet::new();
        for f in r.facts() {
            let [key] = f.key.as_slice() else { continue };
            if f.rest.is_empty() {
                unary.insert((f.relation.as_str(), key.as_str()));
            }
            by_key.insert((f.relation.as_str(), key.as_str()), &f.rest);
            for (i, d) in f.rest.iter().enumerate() {
                uses.entry((f.relation.as_str(), i, d.as_str()))
                    .or_default()
                    .push(key.as_str());
            }
        }
        // Same-relation strict descendants, the reverse of the backward rules.
        let mut descendants: Vec<Vec<Vertex>> = vec![Vec::new(); q.len()];
        for v in q.vertices() {
            for &x in &self.backward[v.0] {
                descendants[x.0].push(v);
            }
        }

        let mut acc = Acceptance::default();
        let mut work: Vec<(String, Vertex)> = Vec::new();
        let add = |acc: &mut Acceptance, work: &mut Vec<(String, Vertex)>, c: &str, v: Vertex| {
            if acc.pairs.insert((c.to_string(), v)) {
                work.push((c.to_string(), v));
            }
        };
        let forward_ok = |acc: &Acceptance, c: &str, z: Vertex| -> bool {
            let Some(rel) = q.relation(z) else { return false };
            match by_key.get(&(rel, c)) {
                Some(rest) => {
                    rest.len() == q.children(z).len()
                        && q.children(z).iter().zip(rest.iter()).all(|(&k, d)| acc.holds(q, d, k))
                }
                None => false,
            }
        };

        for v in q.vertices() {
            match q.label(v) {
                Label::Unary(a) => {
                    for &(rel, c) in &unary {
                        if rel == a {
                            add(&mut acc, &mut work, c, v);
                        }
                    }
                }
                Label::Relation(rel) => {
                    for (&(frel, c), _) in by_key.range((rel.as_str(), "")..) {
                        if frel != rel {
                            break;
                        }
                        if forward_ok(&acc, c, v) {
                            add(&mut acc, &mut work, c, v);
                        }
                    }
                }
                _ => {}
            }
        }
        while let Some((d, v)) = work.pop() {
            for &y in &descendants[v.0] {
                add(&mut acc, &mut work, &d, y);
            }
            if let Some(p) = q.parent(v) {
                let rel = q.relation(p).expect("parents are internal");
                let keys = uses
                    .get(&(rel, q.child_index(v), d.as_str()))
                    .cloned()
                    .unwrap_or_default();
                for c in keys {
                    if !acc.pairs.contains(&(c.to_string(), p)) && forward_ok(&acc, c, p) {
                        add(&mut acc, &mut work, c, p);
                    }
                }
            }
        }
        Ok(acc)
    }

    /// Constants `c` of `r` such that `S_u` accepts a tree set starting in `c`.
    pub fn accepting_constants(&self, u: Vertex, r: &Database) -> Result<BTreeSet<String>, GrammarError> {
        let acc = self.acceptance(r)?;
        Ok(r.adom().iter().filter(|c| acc.holds(&self.q, c, u)).cloned().collect())
    }
}

/// Pairs `(c, u)` accepted over a consistent database. Bottom and constant
/// leaves are answered from their labels rather than stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Acceptance {
    pairs: BTreeSet<(String, Vertex)>,
}

impl Acceptance {
    pub fn holds(&self, q: &TreeQuery, c: &str, u: Vertex) -> bool {
        match q.label(u) {
            Label::Bottom => true,
            Label::Constant(k) => k == c,
            _ => self.pairs.contains(&(c.to_string(), u)),
        }
    }
}

/// A tree flattened into parallel arrays, numbered in pre-order.
struct Arena {
    labels: Vec<Label>,
    children: Vec<Vec<usize>>,
}

impl Arena {
    fn new(tau: &RelTree) -> Arena {
        let mut a = Arena {
            labels: Vec::new(),
            children: Vec::new(),
        };
        a.push(tau);
        a
    }

    fn push(&mut self, t: &RelTree) -> usize {
        let id = self.labels.len();
        self.children.push(Vec::new());
        match t {
            RelTree::Node(r, ch) => {
                self.labels.push(Label::Relation(r.clone()));
                for c in ch {
                    let k = self.push(c);
                    self.children[id].push(k);
                }
            }
            RelTree::Unary(a) => self.labels.push(Label::Unary(a.clone())),
            RelTree::Constant(c) => self.labels.push(Label::Constant(c.clone())),
            RelTree::Bottom => self.labels.push(Label::Bottom),
        }
        id
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Forward {
                from,
                relation,
                children,
            } => {
                let kids: Vec<String> = children.iter().map(|c| format!("S{}", c.0)).collect();
                write!(f, "S{} -> {relation}({})", from.0, kids.join(","))
            }
            Rule::Backward { from, to } => write!(f, "S{} -> S{}", from.0, to.0),
            Rule::Terminal { from, label } => {
                let t = match label {
                    Label::Unary(a) => a.clone(),
                    Label::Constant(c) => format!("'{c}'"),
                    Label::Bottom => "_".into(),
                    Label::Relation(r) => r.clone(),
                };
                write!(f, "S{} -> {t}", from.0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Fact;

    const FIG2: &str = "A(R(R(U,_),X('c1')),R(Y(_),Z('c2',_)))";

    fn t(s: &str) -> TreeQuery {
        TreeQuery::parse(s).unwrap()
    }

    fn tree(s: &str) -> RelTree {
        RelTree::parse(s).unwrap()
    }

    fn db(lines: &[&str]) -> Database {
        Database::from_facts(lines.iter().map(|l| Fact::parse(l).unwrap())).unwrap()
    }

    #[test]
    fn fig2_backward_rule() {
        let q = t(FIG2);
        let g = build_cfg(&q);
        let x1 = q.vertex_at(&[0]).unwrap();
        let x3 = q.vertex_at(&[0, 0]).unwrap();
        assert!(g.rules().contains(&Rule::Backward { from: x3, to: x1 }));
        let backward = g.rules().iter().filter(|r| matches!(r, Rule::Backward { .. })).count();
        assert_eq!(backward, 1);
    }

    #[test]
    fn rule_counts() {
        let g = build_cfg(&t("C(R(A,_),S('c'))"));
        let rules = g.rules();
        assert!(!rules.iter().any(|r| matches!(r, Rule::Backward { .. })));
        assert_eq!(rules.iter().filter(|r| matches!(r, Rule::Forward { .. })).count(), 3);
        let g = build_cfg(&t("R(R(_))"));
        assert!(g.rules().contains(&Rule::Backward {
            from: Vertex(1),
            to: Vertex(0)
        }));
        assert_eq!(g.rules()[1].to_string(), "S1 -> R(S2)");
    }

    #[test]
    fn fig2_worked_derivation() {
        let g = build_cfg(&t(FIG2));
        let tau = tree("A(R(R(R(U,_),X('c1')),X('c1')),R(Y(_),Z('c2',_)))");
        assert!(g.accepts(&tau).unwrap());
        let swapped = tree("A(R(Y(_),Z('c2',_)),R(R(R(U,_),X('c1')),X('c1')))");
        assert!(!g.accepts(&swapped).unwrap());
    }

    #[test]
    fn query_derives_itself() {
        for s in [FIG2, "C(R(A,B),R(B,A))", "R(R(X(_)))", "A"] {
            let q = t(s);
            assert!(build_cfg(&q).accepts(&q.to_tree()).unwrap(), "{s}");
        }
    }

    #[test]
    fn no_rule_swaps_children() {
        let g = build_cfg(&t("C(R(A,B),R(B,A))"));
        assert!(!g.accepts(&tree("C(R(B,A),R(A,B))")).unwrap());
        assert!(g.accepts(&tree("C(R(A,B),R(B,A))")).unwrap());
    }

    #[test]
    fn bottom_only_from_bottom() {
        let g = build_cfg(&t("R(_,A)"));
        assert!(!g.accepts(&tree("R(_,_)")).unwrap());
        assert!(!g.accepts(&tree("R(A,A)")).unwrap());
    }

    #[test]
    fn derives_errors() {
        let g = build_cfg(&t("R(A,B)"));
        assert!(matches!(g.accepts(&tree("R(R(A,B),R)")), Err(GrammarError::Schema(_))));
        assert!(matches!(
            g.accepts(&tree("R(A)")),
            Err(GrammarError::ArityMismatch { .. })
        ));
        assert_eq!(
            g.derives(Vertex(9), &tree("A")),
            Err(GrammarError::UnknownVertex(Vertex(9)))
        );
    }

    #[test]
    fn language_of_path_query() {
        let g = build_cfg(&t("R(R(X(_)))"));
        let lang = g.language(Vertex(0), 4, 100);
        assert!(lang.contains(&tree("R(R(X(_)))")));
        assert!(lang.contains(&tree("R(R(R(X(_))))")));
        assert!(lang.iter().all(|t| t.depth() <= 4));
    }

    #[test]
    fn acceptance_on_chain() {
        let q = t("R(R(X(_)))");
        let g = build_cfg(&q);
        let r = db(&["R(a;b)", "R(b;c)", "X(c;d)"]);
        assert!(g.accepts_in_consistent(Vertex(0), "a", &r).unwrap());
        assert!(!g.accepts_in_consistent(Vertex(0), "d", &r).unwrap());
        assert!(g.accepts_in_consistent(Vertex(1), "b", &r).unwrap());
        assert!(g.accepts_in_consistent(Vertex(2), "c", &r).unwrap());
        assert!(g.accepts_in_consistent(Vertex(3), "zzz", &r).unwrap());
        assert_eq!(
            g.accepting_constants(Vertex(0), &r).unwrap(),
            BTreeSet::from(["a".to_string()])
        );
    }

    #[test]
    fn acceptance_on_cycle() {
        let g = build_cfg(&t("R(R(X(_)))"));
        let r = db(&["R(a;b)", "R(b;a)"]);
        assert!(!g.accepts_in_consistent(Vertex(0), "a", &r).unwrap());
        assert!(g.accepting_constants(Vertex(2), &r).unwrap().is_empty());
    }

    #[test]
    fn acceptance_uses_backward_rules() {
        // R(a;b), R(b;c), R(c;d), X(d;e): the root needs R R X, reached by
        // rewinding at the second R.
        let g = build_cfg(&t("R(R(X(_)))"));
        let r = db(&["R(a;b)", "R(b;c)", "R(c;d)", "X(d;e)"]);
        assert!(g.accepts_in_consistent(Vertex(0), "a", &r).unwrap());
        assert!(g.accepts(&tree("R(R(R(X(_))))")).unwrap());
    }

    #[test]
    fn acceptance_requires_consistency() {
        let g = build_cfg(&t("R(_)"));
        let r = db(&["R(a;b)", "R(a;c)"]);
        assert_eq!(
            g.accepts_in_consistent(Vertex(0), "a", &r),
            Err(GrammarError::Inconsistent)
        );
    }

    #[test]
    fn acceptance_with_constants_and_bottom_children() {
        let g = build_cfg(&t("S(_,'k')"));
        let r = db(&["S(a; x, k)", "S(b; x, j)"]);
        assert_eq!(
            g.accepting_constants(Vertex(0), &r).unwrap(),
            BTreeSet::from(["a".to_string()])
        );
    }
}
