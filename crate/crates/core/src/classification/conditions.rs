use std::fmt;

use crate::homomorphism::{tree_hom_exists, tree_hom_root_pinned, HomTable};
use crate::model::{RelTree, TreeQuery, Vertex};

use super::{ClassifyError, ComplexityClass};

/// `q[y←x]`: the subtree at `y` replaced by a copy of the subtree at `x`.
///
/// Vertices before `y` in pre-order keep their ids, and `y` itself keeps its id
/// as the root of the copy.
pub fn rewind(q: &TreeQuery, y: Vertex, x: Vertex) -> Result<TreeQuery, ClassifyError> {
    for v in [x, y] {
        if !q.contains(v) {
            return Err(ClassifyError::UnknownVertex(v));
        }
        if !q.is_internal(v) {
            return Err(ClassifyError::NotInternal(v));
        }
    }
    if q.relation(x) != q.relation(y) {
        return Err(ClassifyError::LabelMismatch(x, y));
    }
    let replacement = q.subtree_tree(x);
    let path = q.path_to(y);
    let mut tree = q.to_tree();
    let mut slot = &mut tree;
    for &i in &path {
        match slot {
            RelTree::Node(_, ch) => slot = &mut ch[i],
            _ => unreachable!("path of an existing vertex"),
        }
    }
    *slot = replacement;
    Ok(TreeQuery::from_tree(&tree).expect("rewinding preserves the schema"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    Branch,
    Factor,
    Prefix,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Branch => "branch",
            Condition::Factor => "factor",
            Condition::Prefix => "prefix",
        })
    }
}

/// A same-relation pair violating one condition; for ancestor pairs `x ≺ y`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PairWitness {
    pub condition: Condition,
    pub x: Vertex,
    pub y: Vertex,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionReport {
    pub c_branch: bool,
    pub c_factor: bool,
    pub c_prefix: bool,
    pub c1: bool,
    pub c2: bool,
    pub witnesses: Vec<PairWitness>,
}

impl ConditionReport {
    pub fn witnesses_for(&self, c: Condition) -> impl Iterator<Item = &PairWitness> {
        self.witnesses.iter().filter(move |w| w.condition == c)
    }
}

/// Evaluates the pair conditions on every two same-relation internal vertices.
pub fn check_conditions(q: &TreeQuery) -> ConditionReport {
    let table = HomTable::new(q, q);
    let mut witnesses = Vec::new();
    let (mut c_branch, mut c_factor, mut c_prefix) = (true, true, true);
    for (a, b) in q.same_relation_pairs() {
        let relation = q.relation(a).unwrap_or_default().to_string();
        let mut fail = |condition, x, y| {
            witnesses.push(PairWitness {
                condition,
                x,
                y,
                relation: relation.clone(),
            })
        };
        if q.is_ancestor(a, b) {
            let rewound = rewind(q, b, a).expect("same-relation internal pair");
            if !tree_hom_exists(q, &rewound) {
                c_factor = false;
                fail(Condition::Factor, a, b);
            }
            if !tree_hom_root_pinned(q, &rewound) {
                c_prefix = false;
                fail(Condition::Prefix, a, b);
            }
        } else if !table.feasible(b, a) && !table.feasible(a, b) {
            c_branch = false;
            fail(Condition::Branch, a, b);
        }
    }
    let report = ConditionReport {
        c_branch,
        c_factor,
        c_prefix,
        c1: c_prefix && c_branch,
        c2: c_factor && c_branch,
        witnesses,
    };
    debug_assert_eq!(report.c2, c2_direct(q), "C2 decomposition drifted on {q}");
    debug_assert_eq!(report.c1, c1_direct(q), "C1 decomposition drifted on {q}");
    report
}

fn pairwise_direct(q: &TreeQuery, hom: fn(&TreeQuery, &TreeQuery) -> bool) -> bool {
    q.same_relation_pairs()
        .into_iter()
        .all(|(x, y)| hom(q, &rewind(q, y, x).expect("valid pair")) || hom(q, &rewind(q, x, y).expect("valid pair")))
}

/// C2 straight from its definition: for every same-relation pair, `q` maps
/// into one of the two rewinds.
pub fn c2_direct(q: &TreeQuery) -> bool {
    pairwise_direct(q, tree_hom_exists)
}

/// C1 straight from its definition, with root-pinned homomorphisms.
pub fn c1_direct(q: &TreeQuery) -> bool {
    pairwise_direct(q, tree_hom_root_pinned)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeClassification {
    pub class: ComplexityClass,
    pub report: ConditionReport,
}

pub fn classify_tree(q: &TreeQuery) -> TreeClassification {
    let report = check_conditions(q);
    let class = if report.c1 {
        ComplexityClass::Fo
    } else if report.c2 {
        ComplexityClass::NlHardInLfp
    } else {
        ComplexityClass::CoNpComplete
    };
    TreeClassification { class, report }
}

/// `x ⪯ y` on same-relation atoms: `x ≺ y`, or `q|y` maps into `q|x` with `y ↦ x`.
pub fn preorder_le(q: &TreeQuery, x: Vertex, y: Vertex) -> Result<bool, ClassifyError> {
    for v in [x, y] {
        if !q.contains(v) {
            return Err(ClassifyError::UnknownVertex(v));
        }
    }
    match (q.label(x).relation(), q.label(y).relation()) {
        (Some(a), Some(b)) if a == b => {}
        _ => return Err(ClassifyError::LabelMismatch(x, y)),
    }
    Ok(x == y || q.is_ancestor(x, y) || HomTable::new(q, q).feasible(y, x))
}
