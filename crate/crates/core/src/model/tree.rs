use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use super::graph::{Atom, GraphQuery};
use super::syntax::{self, ParseError};
use super::{ModelError, Symbol};

/// A rooted relation tree in explicit (nested) form.
///
/// This is both the parse result of the tree syntax and the representation of
/// the trees a [`crate::grammar::TreeCfg`] accepts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelTree {
    Node(String, Vec<RelTree>),
    Unary(String),
    Constant(String),
    Bottom,
}

impl RelTree {
    pub fn parse(text: &str) -> Result<RelTree, ParseError> {
        syntax::parse_rel_tree(text)
    }

    pub fn size(&self) -> usize {
        match self {
            RelTree::Node(_, ch) => 1 + ch.iter().map(RelTree::size).sum::<usize>(),
            _ => 1,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            RelTree::Node(_, ch) => 1 + ch.iter().map(RelTree::depth).max().unwrap_or(0),
            _ => 0,
        }
    }

    /// Child counts per label, failing when a label is used inconsistently.
    pub fn schema(&self) -> Result<BTreeMap<String, usize>, ModelError> {
        let mut schema = BTreeMap::new();
        self.collect_schema(&mut schema)?;
        Ok(schema)
    }

    pub(crate) fn collect_schema(&self, schema: &mut BTreeMap<String, usize>) -> Result<(), ModelError> {
        let (name, n) = match self {
            RelTree::Node(r, ch) => (r, ch.len()),
            RelTree::Unary(a) => (a, 0),
            _ => return Ok(()),
        };
        match schema.get(name) {
            Some(&m) if m != n => {
                return Err(if m == 0 || n == 0 {
                    ModelError::UnaryAndInternal(name.clone())
                } else {
                    ModelError::ArityConflict {
                        relation: name.clone(),
                        first: m,
                        second: n,
                    }
                })
            }
            Some(_) => {}
            None => {
                schema.insert(name.clone(), n);
            }
        }
        if let RelTree::Node(_, ch) = self {
            for c in ch {
                c.collect_schema(schema)?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for RelTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelTree::Node(r, ch) => {
                write!(f, "{r}(")?;
                for (i, c) in ch.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
            RelTree::Unary(a) => f.write_str(a),
            RelTree::Constant(c) => write!(f, "'{c}'"),
            RelTree::Bottom => f.write_str("_"),
        }
    }
}

/// Index of a vertex in a [`TreeQuery`]; vertices are numbered in pre-order,
/// so the root is always `Vertex(0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex(pub usize);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Relation(String),
    Unary(String),
    Constant(String),
    Bottom,
}

impl Label {
    /// Relation name of an atom-carrying vertex (internal or unary leaf).
    pub fn relation(&self) -> Option<&str> {
        match self {
            Label::Relation(r) | Label::Unary(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Node {
    label: Label,
    children: Vec<Vertex>,
    parent: Option<Vertex>,
    child_index: usize,
    depth: usize,
    /// One past the last pre-order index of this vertex's subtree.
    end: usize,
    /// Variable number (`x{n}`); `None` for constant vertices.
    var: Option<usize>,
}

/// A rooted tree query: an ordered labeled tree whose vertices double as the
/// query's variables (constant leaves carry their constant instead).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TreeQuery {
    nodes: Vec<Node>,
}

impl TreeQuery {
    pub fn parse(text: &str) -> Result<TreeQuery, ModelError> {
        let tree = RelTree::parse(text)?;
        TreeQuery::from_tree(&tree)
    }

    pub fn from_tree(tree: &RelTree) -> Result<TreeQuery, ModelError> {
        match tree {
            RelTree::Node(..) | RelTree::Unary(_) => {}
            _ => return Err(ModelError::RootNotAtom),
        }
        tree.schema()?;
        let mut q = TreeQuery { nodes: Vec::new() };
        q.push(tree, None, 0, 0);
        let mut next_var = 0;
        for n in &mut q.nodes {
            if !matches!(n.label, Label::Constant(_)) {
                n.var = Some(next_var);
                next_var += 1;
            }
        }
        Ok(q)
    }

    fn push(&mut self, tree: &RelTree, parent: Option<Vertex>, child_index: usize, depth: usize) {
        let id = self.nodes.len();
        let label = match tree {
            RelTree::Node(r, _) => Label::Relation(r.clone()),
            RelTree::Unary(a) => Label::Unary(a.clone()),
            RelTree::Constant(c) => Label::Constant(c.clone()),
            RelTree::Bottom => Label::Bottom,
        };
        self.nodes.push(Node {
            label,
            children: Vec::new(),
            parent,
            child_index,
            depth,
            end: id + 1,
            var: None,
        });
        if let RelTree::Node(_, ch) = tree {
            for (i, c) in ch.iter().enumerate() {
                let cid = Vertex(self.nodes.len());
                self.nodes[id].children.push(cid);
                self.push(c, Some(Vertex(id)), i, depth + 1);
            }
        }
        self.nodes[id].end = self.nodes.len();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> Vertex {
        Vertex(0)
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.nodes.len()).map(Vertex)
    }

    pub fn contains(&self, v: Vertex) -> bool {
        v.0 < self.nodes.len()
    }

    pub fn label(&self, v: Vertex) -> &Label {
        &self.nodes[v.0].label
    }

    pub fn children(&self, v: Vertex) -> &[Vertex] {
        &self.nodes[v.0].children
    }

    pub fn parent(&self, v: Vertex) -> Option<Vertex> {
        self.nodes[v.0].parent
    }

    /// Position of `v` among its parent's children (0 for the root).
    pub fn child_index(&self, v: Vertex) -> usize {
        self.nodes[v.0].child_index
    }

    pub fn depth(&self, v: Vertex) -> usize {
        self.nodes[v.0].depth
    }

    pub fn is_internal(&self, v: Vertex) -> bool {
        matches!(self.nodes[v.0].label, Label::Relation(_))
    }

    /// Name of the relation labelling an internal vertex.
    pub fn relation(&self, v: Vertex) -> Option<&str> {
        match &self.nodes[v.0].label {
            Label::Relation(r) => Some(r),
            _ => None,
        }
    }

    /// Strict ancestor test (`a ≺ b`).
    pub fn is_ancestor(&self, a: Vertex, b: Vertex) -> bool {
        a.0 < b.0 && b.0 < self.nodes[a.0].end
    }

    /// Neither vertex is an ancestor of the other, and they differ.
    pub fn incomparable(&self, a: Vertex, b: Vertex) -> bool {
        a != b && !self.is_ancestor(a, b) && !self.is_ancestor(b, a)
    }

    /// Pre-order index range of the subtree rooted at `v`.
    pub fn subtree(&self, v: Vertex) -> Range<usize> {
        v.0..self.nodes[v.0].end
    }

    pub fn subtree_size(&self, v: Vertex) -> usize {
        self.nodes[v.0].end - v.0
    }

    pub fn variable_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.var.is_some()).count()
    }

    /// Query variable standing for `v` (`x0`, `x1`, ... over non-constant
    /// vertices in pre-order), or `None` for a constant leaf.
    pub fn var_name(&self, v: Vertex) -> Option<String> {
        self.nodes[v.0].var.map(|n| format!("x{n}"))
    }

    /// The symbol `v` contributes as an atom argument.
    pub fn symbol(&self, v: Vertex) -> Symbol {
        match &self.nodes[v.0].label {
            Label::Constant(c) => Symbol::Const(c.clone()),
            _ => Symbol::Var(self.var_name(v).expect("non-constant vertex has a variable")),
        }
    }

    pub fn vertex_by_name(&self, name: &str) -> Option<Vertex> {
        let n: usize = name.strip_prefix('x')?.parse().ok()?;
        self.vertices().find(|&v| self.nodes[v.0].var == Some(n))
    }

    /// Child-index path from the root to `v`.
    pub fn path_to(&self, v: Vertex) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = v;
        while let Some(p) = self.parent(cur) {
            path.push(self.child_index(cur));
            cur = p;
        }
        path.reverse();
        path
    }

    /// Vertex reached from the root by following child indices.
    pub fn vertex_at(&self, path: &[usize]) -> Option<Vertex> {
        let mut cur = self.root();
        for &i in path {
            cur = *self.children(cur).get(i)?;
        }
        Some(cur)
    }

    /// Internal vertices, in pre-order.
    pub fn internal_vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.vertices().filter(|&v| self.is_internal(v))
    }

    /// Unordered pairs `(x, y)` with `x < y` of distinct internal vertices sharing a relation.
    pub fn same_relation_pairs(&self) -> Vec<(Vertex, Vertex)> {
        let internal: Vec<Vertex> = self.internal_vertices().collect();
        let mut pairs = Vec::new();
        for (i, &x) in internal.iter().enumerate() {
            for &y in &internal[i + 1..] {
                if self.relation(x) == self.relation(y) {
                    pairs.push((x, y));
                }
            }
        }
        pairs
    }

    /// Strict ancestors of `v` carrying the same relation label, nearest last.
    pub fn same_relation_ancestors(&self, v: Vertex) -> Vec<Vertex> {
        let Some(rel) = self.relation(v) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut cur = self.parent(v);
        while let Some(a) = cur {
            if self.relation(a) == Some(rel) {
                out.push(a);
            }
            cur = self.parent(a);
        }
        out.reverse();
        out
    }

    pub fn is_self_join_free(&self) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        self.vertices()
            .filter_map(|v| self.label(v).relation())
            .all(|r| seen.insert(r))
    }

    /// Child counts per relation name (unary relations map to 0).
    pub fn schema(&self) -> BTreeMap<String, usize> {
        self.to_tree().schema().expect("validated at construction")
    }

    pub fn to_tree(&self) -> RelTree {
        self.subtree_tree(self.root())
    }

    /// The subtree rooted at `v` as an explicit tree (`q|v`).
    pub fn subtree_tree(&self, v: Vertex) -> RelTree {
        match &self.nodes[v.0].label {
            Label::Relation(r) => RelTree::Node(
                r.clone(),
                self.children(v).iter().map(|&c| self.subtree_tree(c)).collect(),
            ),
            Label::Unary(a) => RelTree::Unary(a.clone()),
            Label::Constant(c) => RelTree::Constant(c.clone()),
            Label::Bottom => RelTree::Bottom,
        }
    }

    /// The subquery `q|v` as a standalone tree query (vertices renumbered).
    pub fn subquery(&self, v: Vertex) -> Option<TreeQuery> {
        TreeQuery::from_tree(&self.subtree_tree(v)).ok()
    }

    /// The atom contributed by an internal or unary vertex.
    pub fn atom(&self, v: Vertex) -> Option<Atom> {
        let relation = self.label(v).relation()?.to_string();
        Some(Atom {
            relation,
            key: vec![self.symbol(v)],
            rest: self.children(v).iter().map(|&c| self.symbol(c)).collect(),
        })
    }

    /// Atoms of the vertices selected by `keep`, in pre-order.
    pub fn atoms_where(&self, mut keep: impl FnMut(Vertex) -> bool) -> Vec<Atom> {
        self.vertices()
            .filter(|&v| keep(v))
            .filter_map(|v| self.atom(v))
            .collect()
    }

    /// The query as an atom set.
    pub fn to_graph(&self) -> GraphQuery {
        GraphQuery::from_atoms_unchecked(self.atoms_where(|_| true))
    }
}

impl fmt::Display for TreeQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_tree())
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Converts a tree query into its atom-set form.
pub fn tree_to_graph(q: &TreeQuery) -> GraphQuery {
    q.to_graph()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intro_query_has_seven_vertices() {
        let q = TreeQuery::parse("C(R(A,B),R(B,A))").unwrap();
        assert_eq!(q.len(), 7);
        assert_eq!(q.to_string(), "C(R(A,B),R(B,A))");
        assert_eq!(q.children(q.root()).len(), 2);
    }

    #[test]
    fn fig2_query_has_eleven_variables() {
        let q = TreeQuery::parse("A(R(R(U,_),X('c1')),R(Y(_),Z('c2',_)))").unwrap();
        assert_eq!(q.variable_count(), 11);
        assert_eq!(q.len(), 13);
        let x1 = q.vertex_at(&[0]).unwrap();
        let x3 = q.vertex_at(&[0, 0]).unwrap();
        let x2 = q.vertex_at(&[1]).unwrap();
        assert!(q.is_ancestor(x1, x3));
        assert!(q.incomparable(x1, x2));
        assert!(q.incomparable(x2, x3));
    }

    #[test]
    fn whitespace_normal_form() {
        let q = TreeQuery::parse("  C( R(A , B) ,\n R( B,A ) ) # q1").unwrap();
        assert_eq!(q.to_string(), "C(R(A,B),R(B,A))");
    }

    #[test]
    fn bottom_root_rejected() {
        assert_eq!(TreeQuery::parse("_"), Err(ModelError::RootNotAtom));
        assert_eq!(TreeQuery::parse("'c'"), Err(ModelError::RootNotAtom));
    }

    #[test]
    fn arity_conflicts_rejected() {
        assert!(matches!(
            TreeQuery::parse("R(R(A,B))"),
            Err(ModelError::ArityConflict { .. })
        ));
        assert!(matches!(
            TreeQuery::parse("R(R,_)"),
            Err(ModelError::UnaryAndInternal(_))
        ));
    }

    #[test]
    fn syntax_error_position() {
        match TreeQuery::parse("R(A,,B)") {
            Err(ModelError::Parse(e)) => assert_eq!((e.line, e.column), (1, 5)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(TreeQuery::parse("r(A)"), Err(ModelError::Parse(_))));
        assert!(matches!(TreeQuery::parse("R(A"), Err(ModelError::Parse(_))));
        assert!(matches!(TreeQuery::parse("R()"), Err(ModelError::Parse(_))));
    }

    #[test]
    fn tree_to_graph_intro_query() {
        let q = TreeQuery::parse("C(R(A,B),R(B,A))").unwrap();
        let g = tree_to_graph(&q);
        assert_eq!(
            g.to_string(),
            "C(x0; x1, x4), R(x1; x2, x3), A(x2;), B(x3;), R(x4; x5, x6), B(x5;), A(x6;)"
        );
        assert!(g.is_graphbcq());
    }

    #[test]
    fn tree_to_graph_single_vertex_and_fig2() {
        let q = TreeQuery::parse("R(_)").unwrap();
        assert_eq!(tree_to_graph(&q).to_string(), "R(x0; x1)");
        let q = TreeQuery::parse("A(R(R(U,_),X('c1')),R(Y(_),Z('c2',_)))").unwrap();
        let g = tree_to_graph(&q);
        assert_eq!(g.len(), 8);
        assert!(g
            .atoms()
            .iter()
            .any(|a| a.relation == "X" && a.rest == vec![Symbol::Const("c1".into())]));
        assert!(g
            .atoms()
            .iter()
            .any(|a| a.relation == "Z" && a.rest.len() == 2 && a.rest[0] == Symbol::Const("c2".into())));
    }

    #[test]
    fn paths_and_ancestors() {
        let q = TreeQuery::parse("R(R(R(X(_))))").unwrap();
        let v = q.vertex_at(&[0, 0]).unwrap();
        assert_eq!(q.path_to(v), vec![0, 0]);
        assert_eq!(q.same_relation_ancestors(v), vec![Vertex(0), Vertex(1)]);
        assert_eq!(q.var_name(v).as_deref(), Some("x2"));
        assert_eq!(q.vertex_by_name("x2"), Some(v));
    }
}
