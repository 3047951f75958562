use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::homomorphism::core;
use crate::model::{Atom, GraphQuery, RelTree, Symbol, TreeQuery};

use super::conditions::{classify_tree, ConditionReport};
use super::{ClassifyError, ComplexityClass};

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    /// Joins the two sets; false if they were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Components of the query graph (atoms adjacent when they share a variable),
/// ordered by their least atom index.
pub fn connected_components(q: &GraphQuery) -> Vec<GraphQuery> {
    let atoms = q.atoms();
    let mut uf = UnionFind::new(atoms.len());
    let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, a) in atoms.iter().enumerate() {
        for v in a.vars() {
            match owner.get(v) {
                Some(&j) => {
                    uf.union(i, j);
                }
                None => {
                    owner.insert(v, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..atoms.len() {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    groups.values().map(|idx| q.subquery(idx)).collect()
}

/// Recognizes a connected GraphBCQ query that is a rooted tree query, and
/// returns its tree form.
pub fn is_tree_query(q: &GraphQuery) -> Result<Option<TreeQuery>, ClassifyError> {
    if !q.is_graphbcq() {
        return Err(ClassifyError::NotGraphBcq);
    }
    if connected_components(q).len() != 1 {
        return Err(ClassifyError::NotConnected);
    }
    let mut non_key_uses: BTreeMap<&str, usize> = BTreeMap::new();
    for a in q.atoms() {
        for v in a.rest.iter().filter_map(Symbol::as_var) {
            *non_key_uses.entry(v).or_default() += 1;
        }
    }
    if non_key_uses.values().any(|&n| n > 1) {
        return Ok(None);
    }
    let by_key: BTreeMap<&str, &Atom> = q
        .atoms()
        .iter()
        .map(|a| (a.simple_key().expect("GraphBCQ"), a))
        .collect();
    let roots: Vec<&Atom> = q
        .atoms()
        .iter()
        .filter(|a| !non_key_uses.contains_key(a.simple_key().expect("GraphBCQ")))
        .collect();
    let [root] = roots.as_slice() else {
        return Ok(None);
    };
    let mut visited = BTreeSet::new();
    let tree = build(root, &by_key, &mut visited);
    if visited.len() != q.len() {
        return Ok(None);
    }
    Ok(TreeQuery::from_tree(&tree).ok())
}

fn build<'a>(atom: &'a Atom, by_key: &BTreeMap<&str, &'a Atom>, visited: &mut BTreeSet<&'a str>) -> RelTree {
    let key = atom.simple_key().expect("GraphBCQ");
    visited.insert(key);
    if atom.rest.is_empty() {
        return RelTree::Unary(atom.relation.clone());
    }
    let children = atom
        .rest
        .iter()
        .map(|s| match s {
            Symbol::Const(c) => RelTree::Constant(c.clone()),
            Symbol::Var(v) => match by_key.get(v.as_str()) {
                Some(child) if !visited.contains(v.as_str()) => build(child, by_key, visited),
                _ => RelTree::Bottom,
            },
        })
        .collect();
    RelTree::Node(atom.relation.clone(), children)
}

/// Whether the variable/atom incidence multigraph is acyclic. A variable
/// repeated inside one atom is a double edge and so a cycle.
pub fn berge_acyclic(q: &GraphQuery) -> bool {
    let atoms = q.atoms();
    let vars: Vec<&str> = q.vars().into_iter().collect();
    let index: BTreeMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let mut uf = UnionFind::new(atoms.len() + vars.len());
    for (i, a) in atoms.iter().enumerate() {
        for v in a.args().filter_map(Symbol::as_var) {
            if !uf.union(i, atoms.len() + index[v]) {
                return false;
            }
        }
    }
    true
}

/// A copy of the query where every atom gets its own relation name
/// (`R` becomes `R_1`, `R_2`, ...), with the atom order kept.
pub fn sjf_version(q: &GraphQuery) -> GraphQuery {
    let taken: BTreeSet<&str> = q.atoms().iter().map(|a| a.relation.as_str()).collect();
    let mut used = BTreeSet::new();
    let atoms = q
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut name = format!("{}_{}", a.relation, i + 1);
            while taken.contains(name.as_str()) || used.contains(&name) {
                name.push('_');
            }
            used.insert(name.clone());
            Atom::new(name, a.key.clone(), a.rest.clone())
        })
        .collect();
    GraphQuery::from_atoms(atoms).expect("renaming keeps signatures apart")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strength {
    Weak,
    Strong,
}

impl fmt::Display for Strength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strength::Weak => "weak",
            Strength::Strong => "strong",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackGraph {
    pub atoms: Vec<Atom>,
    /// Per atom, the variables functionally determined by its key under the
    /// dependencies of the other atoms.
    pub closures: Vec<BTreeSet<String>>,
    pub edges: Vec<(usize, usize, Strength)>,
}

impl AttackGraph {
    fn reach(&self) -> Vec<Vec<bool>> {
        let n = self.atoms.len();
        let mut reach = vec![vec![false; n]; n];
        for &(f, g, _) in &self.edges {
            reach[f][g] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    let via = reach[k].clone();
                    for (to, hop) in reach[i].iter_mut().zip(via) {
                        *to |= hop;
                    }
                }
            }
        }
        reach
    }

    pub fn is_acyclic(&self) -> bool {
        let reach = self.reach();
        (0..self.atoms.len()).all(|i| !reach[i][i])
    }

    /// Some cycle uses a strong edge.
    pub fn has_strong_cycle(&self) -> bool {
        let reach = self.reach();
        self.edges.iter().any(|&(f, g, s)| s == Strength::Strong && reach[g][f])
    }

    pub fn edge(&self, f: usize, g: usize) -> Option<Strength> {
        self.edges
            .iter()
            .find(|&&(a, b, _)| a == f && b == g)
            .map(|&(_, _, s)| s)
    }
}

fn fd_closure(start: BTreeSet<String>, fds: &[(BTreeSet<String>, BTreeSet<String>)]) -> BTreeSet<String> {
    let mut closure = start;
    loop {
        let before = closure.len();
        for (lhs, rhs) in fds {
            if lhs.is_subset(&closure) {
                closure.extend(rhs.iter().cloned());
            }
        }
        if closure.len() == before {
            return closure;
        }
    }
}

fn owned(set: BTreeSet<&str>) -> BTreeSet<String> {
    set.into_iter().map(str::to_string).collect()
}

pub fn attack_graph(q: &GraphQuery) -> Result<AttackGraph, ClassifyError> {
    if !q.is_self_join_free() {
        return Err(ClassifyError::SelfJoin);
    }
    let atoms = q.atoms().to_vec();
    let fds: Vec<(BTreeSet<String>, BTreeSet<String>)> =
        atoms.iter().map(|a| (owned(a.key_vars()), owned(a.vars()))).collect();
    let closures: Vec<BTreeSet<String>> = (0..atoms.len())
        .map(|i| {
            let others: Vec<_> = fds
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, fd)| fd.clone())
                .collect();
            fd_closure(owned(atoms[i].key_vars()), &others)
        })
        .collect();
    let vars: Vec<BTreeSet<String>> = atoms.iter().map(|a| owned(a.vars())).collect();
    let mut edges = Vec::new();
    for f in 0..atoms.len() {
        let mut seen = vec![false; atoms.len()];
        seen[f] = true;
        let mut queue = VecDeque::from([f]);
        while let Some(a) = queue.pop_front() {
            for b in 0..atoms.len() {
                if !seen[b] && vars[a].intersection(&vars[b]).any(|v| !closures[f].contains(v)) {
                    seen[b] = true;
                    queue.push_back(b);
                }
            }
        }
        let full = fd_closure(owned(atoms[f].key_vars()), &fds);
        for (g, &hit) in seen.iter().enumerate() {
            if hit && g != f {
                let weak = owned(atoms[g].key_vars()).is_subset(&full);
                edges.push((f, g, if weak { Strength::Weak } else { Strength::Strong }));
            }
        }
    }
    Ok(AttackGraph { atoms, closures, edges })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentReport {
    pub query: GraphQuery,
    pub class: ComplexityClass,
    pub tree: Option<TreeQuery>,
    pub conditions: Option<ConditionReport>,
    pub berge_acyclic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphClassification {
    pub class: ComplexityClass,
    pub core: GraphQuery,
    pub components: Vec<ComponentReport>,
    /// Some component has an unknown upper bound, so the overall class is
    /// only a lower bound.
    pub upper_bound_open: bool,
}

pub fn classify_graph(q: &GraphQuery) -> Result<GraphClassification, ClassifyError> {
    if !q.is_graphbcq() {
        return Err(ClassifyError::NotGraphBcq);
    }
    let core = core(q);
    let mut components = Vec::new();
    for comp in connected_components(&core) {
        let tree = is_tree_query(&comp)?;
        let berge = berge_acyclic(&comp);
        let (class, conditions) = match &tree {
            Some(t) => {
                let c = classify_tree(t);
                (c.class, Some(c.report))
            }
            None if berge => (ComplexityClass::CoNpComplete, None),
            None => (ComplexityClass::LHardNotFoUpperOpen, None),
        };
        components.push(ComponentReport {
            query: comp,
            class,
            tree,
            conditions,
            berge_acyclic: berge,
        });
    }
    let class = components.iter().map(|c| c.class).max().unwrap_or(ComplexityClass::Fo);
    let upper_bound_open = components
        .iter()
        .any(|c| c.class == ComplexityClass::LHardNotFoUpperOpen);
    Ok(GraphClassification {
        class,
        core,
        components,
        upper_bound_open,
    })
}
