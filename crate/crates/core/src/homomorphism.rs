//! Homomorphisms between tree queries and between conjunctive queries, and
//! core computation.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{Atom, GraphQuery, Label, Symbol, TreeQuery, Vertex};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HomError {
    #[error("pinned vertex {0} is not a vertex of the source tree")]
    SourceVertex(Vertex),
    #[error("pinned vertex {0} is not a vertex of the target tree")]
    TargetVertex(Vertex),
}

/// A tree homomorphism, stored as the image of each source vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeHomWitness {
    pub mapping: Vec<Vertex>,
}

impl TreeHomWitness {
    pub fn image(&self, u: Vertex) -> Vertex {
        self.mapping[u.0]
    }
}

/// `feasible(u, v)`: the subtree of `p` at `u` maps into `q` with `u ↦ v`.
///
/// Children are mapped positionally, so a homomorphism is fixed by the image
/// of its root and the table answers every pinned question at once.
#[derive(Debug, Clone)]
pub struct HomTable<'a> {
    p: &'a TreeQuery,
    q: &'a TreeQuery,
    cells: Vec<bool>,
}

impl<'a> HomTable<'a> {
    pub fn new(p: &'a TreeQuery, q: &'a TreeQuery) -> HomTable<'a> {
        let (np, nq) = (p.len(), q.len());
        let mut cells = vec![false; np * nq];
        // Children carry larger pre-order ids than their parents.
        for u in (0..np).rev() {
            for v in (0..nq).rev() {
                let ok = match (p.label(Vertex(u)), q.label(Vertex(v))) {
                    (Label::Bottom, _) => true,
                    (Label::Unary(a), Label::Unary(b)) => a == b,
                    (Label::Constant(a), Label::Constant(b)) => a == b,
                    (Label::Relation(a), Label::Relation(b)) if a == b => {
                        let (cu, cv) = (p.children(Vertex(u)), q.children(Vertex(v)));
                        cu.len() == cv.len() && cu.iter().zip(cv).all(|(x, y)| cells[x.0 * nq + y.0])
                    }
                    _ => false,
                };
                cells[u * nq + v] = ok;
            }
        }
        HomTable { p, q, cells }
    }

    pub fn feasible(&self, u: Vertex, v: Vertex) -> bool {
        self.cells[u.0 * self.q.len() + v.0]
    }

    /// The unique homomorphism of `p|u` into `q` sending `u` to `v`, as a
    /// mapping over all vertices of `p|u`.
    pub fn extend(&self, u: Vertex, v: Vertex) -> Option<BTreeMap<Vertex, Vertex>> {
        if !self.feasible(u, v) {
            return None;
        }
        let mut map = BTreeMap::new();
        let mut stack = vec![(u, v)];
        while let Some((a, b)) = stack.pop() {
            map.insert(a, b);
            if self.p.is_internal(a) {
                for (&ca, &cb) in self.p.children(a).iter().zip(self.q.children(b)) {
                    stack.push((ca, cb));
                }
            }
        }
        Some(map)
    }

    /// Image of `p`'s root forced by pinning `u ↦ v`, if the child-index
    /// paths are compatible.
    pub fn forced_root_image(&self, u: Vertex, v: Vertex) -> Option<Vertex> {
        let mut a = u;
        let mut b = v;
        while let Some(pa) = self.p.parent(a) {
            let pb = self.q.parent(b)?;
            if self.p.child_index(a) != self.q.child_index(b) {
                return None;
            }
            a = pa;
            b = pb;
        }
        Some(b)
    }
}

/// Decides `p ⪯ q`, or `p ⪯_{u→v} q` when `pin = Some((u, v))`, and returns
/// the homomorphism found.
pub fn tree_hom(
    p: &TreeQuery,
    q: &TreeQuery,
    pin: Option<(Vertex, Vertex)>,
) -> Result<Option<TreeHomWitness>, HomError> {
    let table = HomTable::new(p, q);
    let root_image = match pin {
        Some((u, v)) => {
            if !p.contains(u) {
                return Err(HomError::SourceVertex(u));
            }
            if !q.contains(v) {
                return Err(HomError::TargetVertex(v));
            }
            table.forced_root_image(u, v).filter(|&w| table.feasible(p.root(), w))
        }
        None => q.vertices().find(|&w| table.feasible(p.root(), w)),
    };
    Ok(root_image.map(|w| {
        let map = table.extend(p.root(), w).expect("feasible root image");
        TreeHomWitness {
            mapping: map.into_values().collect(),
        }
    }))
}

/// Whether `p ⪯ q`.
pub fn tree_hom_exists(p: &TreeQuery, q: &TreeQuery) -> bool {
    let table = HomTable::new(p, q);
    q.vertices().any(|w| table.feasible(p.root(), w))
}

/// Whether `p ⪯_{r→r'} q` for the two roots.
pub fn tree_hom_root_pinned(p: &TreeQuery, q: &TreeQuery) -> bool {
    HomTable::new(p, q).feasible(p.root(), q.root())
}

/// A homomorphism between conjunctive queries: variables of the source to
/// symbols of the target; constants map to themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CqHomWitness {
    pub mapping: BTreeMap<String, Symbol>,
}

/// Extends `bind` so that `src` lands on `dst`, returning the newly bound
/// variables, or `None` (leaving `bind` unchanged) on a clash.
fn unify_atom(src: &Atom, dst: &Atom, bind: &mut BTreeMap<String, Symbol>) -> Option<Vec<String>> {
    if src.relation != dst.relation || src.key.len() != dst.key.len() || src.rest.len() != dst.rest.len() {
        return None;
    }
    let mut added = Vec::new();
    for (s, d) in src.args().zip(dst.args()) {
        let ok = match s {
            Symbol::Const(_) => s == d,
            Symbol::Var(v) => match bind.get(v) {
                Some(b) => b == d,
                None => {
                    bind.insert(v.clone(), d.clone());
                    added.push(v.clone());
                    true
                }
            },
        };
        if !ok {
            for v in &added {
                bind.remove(v);
            }
            return None;
        }
    }
    Some(added)
}

/// Finds a homomorphism from `p` to `q` by backtracking over atom images,
/// always expanding the source atom with the fewest compatible targets.
pub fn cq_hom(p: &GraphQuery, q: &GraphQuery) -> Option<CqHomWitness> {
    let mut by_rel: BTreeMap<&str, Vec<&Atom>> = BTreeMap::new();
    for a in q.atoms() {
        by_rel.entry(a.relation.as_str()).or_default().push(a);
    }
    let src: Vec<&Atom> = p.atoms().iter().collect();
    let mut done = vec![false; src.len()];
    let mut bind = BTreeMap::new();
    if search(&src, &by_rel, &mut done, &mut bind) {
        Some(CqHomWitness { mapping: bind })
    } else {
        None
    }
}

fn search(
    src: &[&Atom],
    by_rel: &BTreeMap<&str, Vec<&Atom>>,
    done: &mut [bool],
    bind: &mut BTreeMap<String, Symbol>,
) -> bool {
    let mut best: Option<(usize, Vec<&Atom>)> = None;
    for (i, a) in src.iter().enumerate() {
        if done[i] {
            continue;
        }
        let cands: Vec<&Atom> = by_rel
            .get(a.relation.as_str())
            .into_iter()
            .flatten()
            .copied()
            .filter(|d| {
                let mut probe = bind.clone();
                unify_atom(a, d, &mut probe).is_some()
            })
            .collect();
        if best.as_ref().is_none_or(|(_, c)| cands.len() < c.len()) {
            let empty = cands.is_empty();
            best = Some((i, cands));
            if empty {
                break;
            }
        }
    }
    let Some((i, cands)) = best else {
        return true;
    };
    done[i] = true;
    for d in cands {
        if let Some(added) = unify_atom(src[i], d, bind) {
            if search(src, by_rel, done, bind) {
                return true;
            }
            for v in added {
                bind.remove(&v);
            }
        }
    }
    done[i] = false;
    false
}

/// A minimal equivalent subquery: drops the lowest-index atom `a` with
/// `q → q \ {a}` until no atom can be dropped.
pub fn core(q: &GraphQuery) -> GraphQuery {
    let mut cur = q.clone();
    'outer: loop {
        for i in 0..cur.len() {
            let keep: Vec<usize> = (0..cur.len()).filter(|&j| j != i).collect();
            let smaller = cur.subquery(&keep);
            if !smaller.is_empty() && cq_hom(&cur, &smaller).is_some() {
                cur = smaller;
                continue 'outer;
            }
        }
        return cur;
    }
}
