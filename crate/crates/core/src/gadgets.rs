//! Instance generators for the hardness reductions and the named example
//! database. Fresh constants follow `g.<gadget>.<part>.<index>`.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::classification::{check_conditions, rewind, sjf_version, ClassifyError, Condition};
use crate::homomorphism::{core, tree_hom_exists, HomTable};
use crate::model::{Database, Fact, GraphQuery, ModelError, Symbol, TreeQuery, Vertex};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GadgetError {
    #[error("variable `{0}` does not occur in the query")]
    UnknownVariable(String),
    #[error("constant `{0}` is bound to more than one variable")]
    DuplicateBinding(String),
    #[error("constant `{0}` collides with a constant already in use")]
    Collision(String),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("pair {0}/{1} does not violate C2: the query maps into one of its rewinds")]
    NotC2Witness(Vertex, Vertex),
    #[error("query satisfies C2, so there is no witness pair")]
    NoC2Witness,
    #[error("{0} is not a proper same-relation ancestor of {1}")]
    NotAncestorPair(Vertex, Vertex),
    #[error("pair {0}/{1} has a root homomorphism from the lower subtree to the upper one")]
    NotReachWitness(Vertex, Vertex),
    #[error("could not normalize witness pair {0}/{1} to a consecutive lowest pair")]
    Normalization(Vertex, Vertex),
    #[error("graph has a cycle")]
    Cyclic,
    #[error("vertex `{0}` is not in the graph")]
    UnknownVertex(String),
    #[error("query is not minimal (its core has {core} of {atoms} atoms)")]
    NotMinimal { core: usize, atoms: usize },
    #[error("two `{0}` atoms share their key, so lifted blocks would merge")]
    SharedKey(String),
    #[error("relation `{0}` is not part of the self-join-free query")]
    ForeignRelation(String),
    #[error("fact `{0}` does not match the arity of its atom")]
    ArityMismatch(Fact),
    #[error("cannot parse `{text}`: {message}")]
    Syntax { text: String, message: String },
}

/// Grounds `q`: variables in `bindings` take the given constants, every other
/// variable takes `fresh(variable)`, and constants of `q` stay.
pub fn canonical_copy(
    q: &GraphQuery,
    bindings: &BTreeMap<String, String>,
    mut fresh: impl FnMut(&str) -> String,
) -> Result<Vec<Fact>, GadgetError> {
    let vars = q.vars();
    let mut used: HashSet<String> = q.constants().into_iter().map(str::to_string).collect();
    for (v, c) in bindings {
        if !vars.contains(v.as_str()) {
            return Err(GadgetError::UnknownVariable(v.clone()));
        }
        if q.constants().contains(c.as_str()) {
            return Err(GadgetError::Collision(c.clone()));
        }
        if !used.insert(c.clone()) {
            return Err(GadgetError::DuplicateBinding(c.clone()));
        }
    }
    let mut value: BTreeMap<&str, String> = BTreeMap::new();
    for v in vars {
        let c = match bindings.get(v) {
            Some(c) => c.clone(),
            None => {
                let c = fresh(v);
                if !used.insert(c.clone()) {
                    return Err(GadgetError::Collision(c));
                }
                c
            }
        };
        value.insert(v, c);
    }
    let ground = |s: &Symbol| match s {
        Symbol::Var(v) => value[v.as_str()].clone(),
        Symbol::Const(c) => c.clone(),
    };
    Ok(q.atoms()
        .iter()
        .map(|a| {
            Fact::new(
                a.relation.clone(),
                a.key.iter().map(ground).collect(),
                a.rest.iter().map(ground).collect(),
            )
        })
        .collect())
}

/// Canonical copy of the atoms of `q` at vertices selected by `keep`, with
/// vertex bindings; bindings for vertices absent from the part are dropped.
fn tree_part(
    q: &TreeQuery,
    keep: impl Fn(Vertex) -> bool,
    bindings: &[(Vertex, &str)],
    prefix: &str,
) -> Result<Vec<Fact>, GadgetError> {
    let part = GraphQuery::from_atoms_unchecked(q.atoms_where(keep));
    let vars = part.vars();
    let map: BTreeMap<String, String> = bindings
        .iter()
        .filter_map(|&(v, c)| q.var_name(v).map(|n| (n, c.to_string())))
        .filter(|(n, _)| vars.contains(n.as_str()))
        .collect();
    canonical_copy(&part, &map, |v| format!("{prefix}.{v}"))
}

fn in_subtree(q: &TreeQuery, root: Vertex) -> impl Fn(Vertex) -> bool {
    let range = q.subtree(root);
    move |v| range.contains(&v.0)
}

/// A CNF whose clauses are each all-positive or all-negative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonotoneCnf {
    pub variables: Vec<String>,
    pub clauses: Vec<Clause>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    pub positive: bool,
    pub literals: Vec<String>,
}

impl MonotoneCnf {
    /// Builds a formula, collecting variables in order of first use plus any
    /// extra declared ones.
    pub fn new(variables: Vec<String>, clauses: Vec<Clause>) -> Result<MonotoneCnf, GadgetError> {
        let mut vars = variables;
        for c in &clauses {
            if c.literals.is_empty() {
                return Err(GadgetError::Syntax {
                    text: String::new(),
                    message: "empty clause".into(),
                });
            }
            for l in &c.literals {
                if !vars.contains(l) {
                    vars.push(l.clone());
                }
            }
        }
        Ok(MonotoneCnf {
            variables: vars,
            clauses,
        })
    }

    /// Parses `(x1|x2)&(~x1|~x2)`; `!` also negates and whitespace is ignored.
    pub fn parse(text: &str) -> Result<MonotoneCnf, GadgetError> {
        let err = |message: &str| GadgetError::Syntax {
            text: text.to_string(),
            message: message.to_string(),
        };
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let mut clauses = Vec::new();
        if compact.is_empty() {
            return MonotoneCnf::new(Vec::new(), clauses);
        }
        for part in compact.split('&') {
            let inner = part.strip_prefix('(').and_then(|p| p.strip_suffix(')')).unwrap_or(part);
            let mut literals = Vec::new();
            let mut polarity = None;
            for lit in inner.split('|') {
                let (positive, name) = match lit.strip_prefix('~').or_else(|| lit.strip_prefix('!')) {
                    Some(n) => (false, n),
                    None => (true, lit),
                };
                if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
                    return Err(err("expected a variable name"));
                }
                if *polarity.get_or_insert(positive) != positive {
                    return Err(err("clause mixes positive and negative literals"));
                }
                literals.push(name.to_string());
            }
            clauses.push(Clause {
                positive: polarity.unwrap_or(true),
                literals,
            });
        }
        MonotoneCnf::new(Vec::new(), clauses)
    }

    pub fn evaluate(&self, assignment: &BTreeMap<&str, bool>) -> bool {
        self.clauses.iter().all(|c| {
            c.literals
                .iter()
                .any(|l| assignment.get(l.as_str()).copied().unwrap_or(false) == c.positive)
        })
    }

    /// Truth-table satisfiability.
    pub fn satisfiable(&self) -> bool {
        let n = self.variables.len();
        (0u64..1 << n).any(|bits| {
            let a = self
                .variables
                .iter()
                .enumerate()
                .map(|(i, v)| (v.as_str(), bits >> i & 1 == 1))
                .collect();
            self.evaluate(&a)
        })
    }

    /// Every formula over `x1..xk` (`k ≤ max_vars`) with at most
    /// `max_clauses` distinct clauses, as sets.
    pub fn enumerate(max_vars: usize, max_clauses: usize) -> Vec<MonotoneCnf> {
        let mut out = Vec::new();
        for k in 1..=max_vars {
            let vars: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
            let mut options = Vec::new();
            for positive in [true, false] {
                for mask in 1u32..1 << k {
                    let literals = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| vars[i].clone()).collect();
                    options.push(Clause { positive, literals });
                }
            }
            let mut pick = Vec::new();
            choose(&options, 0, max_clauses, &mut pick, &mut |cs| {
                out.push(MonotoneCnf {
                    variables: vars.clone(),
                    clauses: cs.to_vec(),
                })
            });
        }
        out
    }
}

fn choose<T: Clone>(items: &[T], from: usize, left: usize, pick: &mut Vec<T>, emit: &mut impl FnMut(&[T])) {
    emit(pick);
    if left == 0 {
        return;
    }
    for i in from..items.len() {
        pick.push(items[i].clone());
        choose(items, i + 1, left - 1, pick, emit);
        pick.pop();
    }
}

impl fmt::Display for MonotoneCnf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .clauses
            .iter()
            .map(|c| {
                let sign = if c.positive { "" } else { "~" };
                let lits: Vec<String> = c.literals.iter().map(|l| format!("{sign}{l}")).collect();
                format!("({})", lits.join("|"))
            })
            .collect();
        f.write_str(&parts.join("&"))
    }
}

/// Finds a same-relation pair `(p, n)` such that `q` maps into neither
/// rewind, in the order `check_conditions` reports violations.
pub fn find_c2_witness(q: &TreeQuery) -> Option<(Vertex, Vertex)> {
    check_conditions(q)
        .witnesses
        .iter()
        .filter(|w| matches!(w.condition, Condition::Branch | Condition::Factor))
        .map(|w| (w.x, w.y))
        .find(|&(x, y)| violates_c2(q, x, y).unwrap_or(false))
}

fn violates_c2(q: &TreeQuery, p: Vertex, n: Vertex) -> Result<bool, ClassifyError> {
    Ok(!tree_hom_exists(q, &rewind(q, p, n)?) && !tree_hom_exists(q, &rewind(q, n, p)?))
}

/// Monotone SAT reduction: `brute_certain` on the result is false iff `phi`
/// is satisfiable. Without a pair, the first C2 witness is used.
pub fn sat_gadget(q: &TreeQuery, pair: Option<(Vertex, Vertex)>, phi: &MonotoneCnf) -> Result<Database, GadgetError> {
    let (p, n) = match pair {
        Some((p, n)) => {
            if !violates_c2(q, p, n)? {
                return Err(GadgetError::NotC2Witness(p, n));
            }
            (p, n)
        }
        None => find_c2_witness(q).ok_or(GadgetError::NoC2Witness)?,
    };
    let root = q.root();
    let var_const = |z: &str| format!("g.sat.var.{z}");
    let mut facts = Vec::new();
    for z in &phi.variables {
        let c = var_const(z);
        facts.extend(tree_part(q, in_subtree(q, p), &[(p, &c)], &format!("g.sat.pos.{z}"))?);
        facts.extend(tree_part(q, in_subtree(q, n), &[(n, &c)], &format!("g.sat.neg.{z}"))?);
    }
    for (i, clause) in phi.clauses.iter().enumerate() {
        let clause_const = format!("g.sat.clause.{i}");
        let cut = if clause.positive { p } else { n };
        let below = in_subtree(q, cut);
        for (j, z) in clause.literals.iter().enumerate() {
            let c = var_const(z);
            facts.extend(tree_part(
                q,
                |v| !below(v),
                &[(root, &clause_const), (cut, &c)],
                &format!("g.sat.lit.{i}.{j}"),
            )?);
        }
    }
    Ok(Database::from_facts(facts)?)
}

/// A directed graph with designated source and target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    pub vertices: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub s: String,
    pub t: String,
}

impl Digraph {
    pub fn new(
        vertices: Vec<String>,
        edges: Vec<(String, String)>,
        s: impl Into<String>,
        t: impl Into<String>,
    ) -> Result<Digraph, GadgetError> {
        let (s, t) = (s.into(), t.into());
        let known: BTreeSet<&str> = vertices.iter().map(String::as_str).collect();
        for v in edges.iter().flat_map(|(u, v)| [u, v]).chain([&s, &t]) {
            if !known.contains(v.as_str()) {
                return Err(GadgetError::UnknownVertex(v.clone()));
            }
        }
        Ok(Digraph { vertices, edges, s, t })
    }

    /// Parses edges like `s>a, a>t`; bare names add isolated vertices. The
    /// source and target are `s` and `t` and are always present.
    pub fn parse(text: &str) -> Result<Digraph, GadgetError> {
        let mut vertices = vec!["s".to_string(), "t".to_string()];
        let mut edges = Vec::new();
        let add = |v: &str, vs: &mut Vec<String>| -> Result<String, GadgetError> {
            if v.is_empty() || !v.chars().all(|c| c.is_alphanumeric() || c == '_') {
                return Err(GadgetError::Syntax {
                    text: text.to_string(),
                    message: format!("bad vertex name `{v}`"),
                });
            }
            if !vs.iter().any(|x| x == v) {
                vs.push(v.to_string());
            }
            Ok(v.to_string())
        };
        for item in text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
        {
            match item.split_once('>') {
                Some((u, v)) => {
                    let u = add(u, &mut vertices)?;
                    let v = add(v, &mut vertices)?;
                    edges.push((u, v));
                }
                None => {
                    add(item, &mut vertices)?;
                }
            }
        }
        Digraph::new(vertices, edges, "s", "t")
    }

    fn successors(&self, u: &str) -> impl Iterator<Item = &str> + '_ {
        let u = u.to_string();
        self.edges.iter().filter(move |(a, _)| *a == u).map(|(_, b)| b.as_str())
    }

    pub fn is_acyclic(&self) -> bool {
        let mut indeg: BTreeMap<&str, usize> = self.vertices.iter().map(|v| (v.as_str(), 0)).collect();
        for (_, v) in &self.edges {
            *indeg.get_mut(v.as_str()).expect("checked vertex") += 1;
        }
        let mut queue: VecDeque<&str> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&v, _)| v).collect();
        let mut seen = 0;
        while let Some(u) = queue.pop_front() {
            seen += 1;
            for v in self.successors(u) {
                let d = indeg.get_mut(v).expect("checked vertex");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(v);
                }
            }
        }
        seen == self.vertices.len()
    }

    /// Whether `t` is reachable from `s` (always true when `s == t`).
    pub fn reachable(&self) -> bool {
        let mut seen = BTreeSet::from([self.s.as_str()]);
        let mut stack = vec![self.s.as_str()];
        while let Some(u) = stack.pop() {
            if u == self.t {
                return true;
            }
            for v in self.successors(u) {
                if seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        false
    }

    /// Every DAG on the labeled vertices `v0..v{n-1}` for `n ≤ max_vertices`,
    /// with each choice of source and target.
    pub fn enumerate_dags(max_vertices: usize) -> Vec<Digraph> {
        let mut out = Vec::new();
        for n in 1..=max_vertices {
            let vertices: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
                .collect();
            for mask in 0u64..1 << pairs.len() {
                let edges: Vec<(String, String)> = pairs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &(a, b))| (vertices[a].clone(), vertices[b].clone()))
                    .collect();
                let g = Digraph {
                    vertices: vertices.clone(),
                    edges,
                    s: vertices[0].clone(),
                    t: vertices[0].clone(),
                };
                if !g.is_acyclic() {
                    continue;
                }
                for s in &vertices {
                    for t in &vertices {
                        out.push(Digraph {
                            s: s.clone(),
                            t: t.clone(),
                            ..g.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// Re-selects a violating pair for the reachability reduction: the
/// consecutive same-relation pair with the deepest lower vertex whose lower
/// subtree does not root-map into the upper one. All same-relation vertices
/// below the chosen lower vertex must root-map into it.
pub fn normalize_reach_pair(q: &TreeQuery, x: Vertex, y: Vertex) -> Result<(Vertex, Vertex), GadgetError> {
    for v in [x, y] {
        if !q.contains(v) {
            return Err(ClassifyError::UnknownVertex(v).into());
        }
        if !q.is_internal(v) {
            return Err(ClassifyError::NotInternal(v).into());
        }
    }
    let rel = q.relation(x);
    if rel != q.relation(y) || !q.is_ancestor(x, y) {
        return Err(GadgetError::NotAncestorPair(x, y));
    }
    let table = HomTable::new(q, q);
    if table.feasible(y, x) {
        return Err(GadgetError::NotReachWitness(x, y));
    }
    let consecutive = q.internal_vertices().filter(|&b| q.relation(b) == rel).filter_map(|b| {
        let a = *q.same_relation_ancestors(b).last()?;
        (!table.feasible(b, a)).then_some((a, b))
    });
    let (a, b) = consecutive
        .max_by_key(|&(_, b)| (q.depth(b), std::cmp::Reverse(b)))
        .ok_or(GadgetError::Normalization(x, y))?;
    let below_ok = q
        .internal_vertices()
        .filter(|&z| q.relation(z) == rel && q.is_ancestor(b, z))
        .all(|z| table.feasible(z, b));
    if !below_ok {
        return Err(GadgetError::Normalization(x, y));
    }
    Ok((a, b))
}

/// Reachability reduction: `brute_certain` on the result is false iff `t` is
/// reachable from `s`. The pair is normalized first.
pub fn reach_gadget(q: &TreeQuery, x: Vertex, y: Vertex, g: &Digraph) -> Result<Database, GadgetError> {
    let (x, y) = normalize_reach_pair(q, x, y)?;
    if !g.is_acyclic() {
        return Err(GadgetError::Cyclic);
    }
    let vc = |u: &str| format!("g.reach.v.{u}");
    let (s_src, t_sink) = ("g.reach.source".to_string(), "g.reach.sink".to_string());
    let at_x = in_subtree(q, x);
    let at_y = in_subtree(q, y);
    let mut facts = Vec::new();
    let tops = g.vertices.iter().map(|u| vc(u)).chain([s_src.clone()]);
    for (i, u) in tops.enumerate() {
        facts.extend(tree_part(q, |v| !at_x(v), &[(x, &u)], &format!("g.reach.top.{i}"))?);
    }
    let extra = [(s_src, vc(&g.s)), (vc(&g.t), t_sink)];
    let edges = g.edges.iter().map(|(u, v)| (vc(u), vc(v))).chain(extra);
    for (i, (u, v)) in edges.enumerate() {
        facts.extend(tree_part(
            q,
            |w| at_x(w) && !at_y(w),
            &[(x, &u), (y, &v)],
            &format!("g.reach.edge.{i}"),
        )?);
    }
    for (i, u) in g.vertices.iter().enumerate() {
        facts.extend(tree_part(q, &at_y, &[(y, &vc(u))], &format!("g.reach.tail.{i}"))?);
    }
    Ok(Database::from_facts(facts)?)
}

/// Lifts an instance of `sjf_version(q)` to one of `q`: constant `f` at the
/// position of term `α` becomes `f@α`. Positions holding a query constant
/// keep the fact's constant. Same-relation atoms must have distinct keys:
/// otherwise facts from different blocks of the lifted instance collide.
pub fn sjf_lift(q: &GraphQuery, sjf_db: &Database) -> Result<Database, GadgetError> {
    let min = core(q);
    if min.len() != q.len() {
        return Err(GadgetError::NotMinimal {
            core: min.len(),
            atoms: q.len(),
        });
    }
    let atoms = q.atoms();
    for (i, a) in atoms.iter().enumerate() {
        if atoms[i + 1..]
            .iter()
            .any(|b| a.relation == b.relation && a.key == b.key)
        {
            return Err(GadgetError::SharedKey(a.relation.clone()));
        }
    }
    let sjf = sjf_version(q);
    let by_name: BTreeMap<&str, usize> = sjf
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| (a.relation.as_str(), i))
        .collect();
    let pair = |f: &String, term: &Symbol| match term {
        Symbol::Var(v) => format!("{f}@{v}"),
        Symbol::Const(_) => f.clone(),
    };
    let mut out = Database::new();
    for f in sjf_db.facts() {
        let &i = by_name
            .get(f.relation.as_str())
            .ok_or_else(|| GadgetError::ForeignRelation(f.relation.clone()))?;
        let atom = &q.atoms()[i];
        if f.key.len() != atom.key.len() || f.rest.len() != atom.rest.len() {
            return Err(GadgetError::ArityMismatch(f.clone()));
        }
        out.insert(Fact::new(
            atom.relation.clone(),
            f.key.iter().zip(&atom.key).map(|(c, t)| pair(c, t)).collect(),
            f.rest.iter().zip(&atom.rest).map(|(c, t)| pair(c, t)).collect(),
        ))?;
    }
    Ok(out)
}

/// The query `C(R(A,B),R(B,A))` and the twelve-fact example database for it.
pub fn fig5_instance() -> (TreeQuery, Database) {
    let q = TreeQuery::parse("C(R(A,B),R(B,A))").expect("fixed query");
    let facts = [
        Fact::simple("C", "c1", &["x1", "z-"]),
        Fact::simple("C", "c1", &["x2", "z-"]),
        Fact::simple("C", "c2", &["z+", "x1"]),
        Fact::simple("C", "c2", &["z+", "x2"]),
        Fact::simple("R", "x1", &["a", "b"]),
        Fact::simple("R", "x1", &["b", "a"]),
        Fact::simple("R", "x2", &["a", "b"]),
        Fact::simple("R", "x2", &["b", "a"]),
        Fact::simple("R", "z+", &["a", "b"]),
        Fact::simple("R", "z-", &["b", "a"]),
        Fact::simple("A", "a", &[]),
        Fact::simple("B", "b", &[]),
    ];
    (q, Database::from_facts(facts).expect("fixed instance"))
}

/// The starred repair of the example database, which falsifies the query
/// (the assignment `x1 = 1`, `x2 = 0`).
pub fn fig5_star_repair() -> Database {
    Database::from_facts([
        Fact::simple("C", "c1", &["x1", "z-"]),
        Fact::simple("C", "c2", &["z+", "x2"]),
        Fact::simple("R", "x1", &["b", "a"]),
        Fact::simple("R", "x2", &["a", "b"]),
        Fact::simple("R", "z+", &["a", "b"]),
        Fact::simple("R", "z-", &["b", "a"]),
        Fact::simple("A", "a", &[]),
        Fact::simple("B", "b", &[]),
    ])
    .expect("fixed repair")
}
