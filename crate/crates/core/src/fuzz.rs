//! Seeded generators for random tree queries and adversarial databases.
//!
//! Databases plant images of the query and of its rewinds, then add noise,
//! and are trimmed to the requested block-size and repair-count bounds.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classification::{classify_tree, rewind, TreeClassification};
use crate::model::{Atom, Database, Fact, GraphQuery, Label, RelTree, Symbol, TreeQuery};

pub type FuzzRng = ChaCha8Rng;

pub fn rng(seed: u64) -> FuzzRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shape parameters for random tree queries.
#[derive(Debug, Clone)]
pub struct TreeParams {
    pub max_vertices: usize,
    /// Internal relation names; each gets a random child count per query.
    pub relations: Vec<String>,
    pub max_children: usize,
    pub unary: Vec<String>,
    pub constants: Vec<String>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_vertices: 8,
            relations: vec!["R".into(), "R".into(), "S".into()],
            max_children: 2,
            unary: vec!["A".into(), "B".into()],
            constants: vec!["k".into()],
        }
    }
}

/// A random tree query with at most `p.max_vertices` vertices and an internal root.
pub fn random_tree(rng: &mut impl Rng, p: &TreeParams) -> TreeQuery {
    let mut arity: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &p.relations {
        arity.entry(r).or_insert_with(|| rng.gen_range(1..=p.max_children));
    }
    let names: Vec<&str> = p.relations.iter().map(String::as_str).collect();
    // Pick a root that fits.
    let fitting: Vec<&str> = names.iter().copied().filter(|r| arity[r] < p.max_vertices).collect();
    let root = *fitting.choose(rng).expect("some relation fits the vertex budget");
    let mut budget = p.max_vertices - 1 - arity[root];
    let tree = grow(rng, p, &arity, &names, root, &mut budget);
    TreeQuery::from_tree(&tree).expect("generator keeps the schema consistent")
}

fn grow(
    rng: &mut impl Rng,
    p: &TreeParams,
    arity: &BTreeMap<&str, usize>,
    names: &[&str],
    rel: &str,
    budget: &mut usize,
) -> RelTree {
    let mut children = Vec::new();
    for _ in 0..arity[rel] {
        let options: Vec<&str> = names.iter().copied().filter(|r| arity[r] <= *budget).collect();
        let child = if !options.is_empty() && rng.gen_bool(0.55) {
            let r = *options.choose(rng).expect("non-empty");
            *budget -= arity[r];
            grow(rng, p, arity, names, r, budget)
        } else {
            leaf(rng, p)
        };
        children.push(child);
    }
    RelTree::Node(rel.to_string(), children)
}

fn leaf(rng: &mut impl Rng, p: &TreeParams) -> RelTree {
    let roll: f64 = rng.gen();
    if roll < 0.45 || (p.unary.is_empty() && p.constants.is_empty()) {
        RelTree::Bottom
    } else if roll < 0.9 && !p.unary.is_empty() {
        RelTree::Unary(p.unary.choose(rng).expect("non-empty").clone())
    } else if let Some(c) = p.constants.choose(rng) {
        RelTree::Constant(c.clone())
    } else {
        RelTree::Bottom
    }
}

/// Draws random trees until one passes `keep` (at most `tries` draws).
pub fn random_tree_where(
    rng: &mut impl Rng,
    p: &TreeParams,
    tries: usize,
    mut keep: impl FnMut(&TreeQuery, &TreeClassification) -> bool,
) -> Option<TreeQuery> {
    (0..tries).find_map(|_| {
        let q = random_tree(rng, p);
        let c = classify_tree(&q);
        keep(&q, &c).then_some(q)
    })
}

/// Bounds for random databases.
#[derive(Debug, Clone)]
pub struct DbParams {
    pub adom: usize,
    pub max_block: usize,
    pub max_repairs: u128,
    pub max_plants: usize,
    pub max_noise: usize,
}

impl Default for DbParams {
    fn default() -> Self {
        DbParams {
            adom: 6,
            max_block: 3,
            max_repairs: 4096,
            max_plants: 4,
            max_noise: 14,
        }
    }
}

fn adom_names(n: usize) -> Vec<String> {
    (0..n).map(|i| char::from(b'a' + i as u8).to_string()).collect()
}

/// Grounds `q` with a random valuation over `adom` (not necessarily injective).
fn random_image(rng: &mut impl Rng, q: &TreeQuery, adom: &[String]) -> Vec<Fact> {
    let value: Vec<String> = q
        .vertices()
        .map(|v| match q.label(v) {
            Label::Constant(c) => c.clone(),
            _ => adom.choose(rng).expect("non-empty adom").clone(),
        })
        .collect();
    q.internal_vertices()
        .chain(q.vertices().filter(|&v| matches!(q.label(v), Label::Unary(_))))
        .map(|v| {
            let rel = q.label(v).relation().expect("atom vertex").to_string();
            let rest = q.children(v).iter().map(|c| value[c.0].clone()).collect();
            Fact::new(rel, vec![value[v.0].clone()], rest)
        })
        .collect()
}

/// A random database for `q` within the bounds of `p`.
pub fn random_db(rng: &mut impl Rng, q: &TreeQuery, p: &DbParams) -> Database {
    // Query constants count against the active-domain bound.
    let fixed = q
        .vertices()
        .filter_map(|v| match q.label(v) {
            Label::Constant(c) => Some(c),
            _ => None,
        })
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    let adom = adom_names(p.adom.saturating_sub(fixed).clamp(1, 26));
    let mut facts: Vec<Fact> = Vec::new();
    let pairs = q.same_relation_pairs();
    for _ in 0..rng.gen_range(0..=p.max_plants) {
        // Rewinds are near-misses: they share the query's shape but may not satisfy it.
        let source = match pairs.choose(rng) {
            Some(&(x, y)) if rng.gen_bool(0.5) => {
                let (a, b) = if rng.gen_bool(0.5) { (x, y) } else { (y, x) };
                rewind(q, a, b).expect("same-relation pair")
            }
            _ => q.clone(),
        };
        let image = random_image(rng, &source, &adom);
        // Partial plants leave gaps the repairs have to route around.
        let keep = if rng.gen_bool(0.3) {
            rng.gen_range(1..=image.len())
        } else {
            image.len()
        };
        facts.extend(image.into_iter().take(keep));
    }
    let schema = q.schema();
    let internal: Vec<(&String, &usize)> = schema.iter().filter(|(_, &n)| n > 0).collect();
    let unary: Vec<&String> = schema.iter().filter(|(_, &n)| n == 0).map(|(r, _)| r).collect();
    for _ in 0..rng.gen_range(0..=p.max_noise) {
        let pick = |rng: &mut _| adom.choose(rng).expect("non-empty adom").clone();
        if !unary.is_empty() && (internal.is_empty() || rng.gen_bool(0.25)) {
            let r = unary.choose(rng).expect("non-empty");
            facts.push(Fact::new(r.as_str(), vec![pick(rng)], vec![]));
        } else if let Some(&(r, &n)) = internal.choose(rng) {
            let rest = (0..n).map(|_| pick(rng)).collect();
            facts.push(Fact::new(r.as_str(), vec![pick(rng)], rest));
        }
    }
    trim(facts, p)
}

/// Builds a database keeping facts in order while respecting the block-size
/// and repair-count bounds.
fn trim(facts: Vec<Fact>, p: &DbParams) -> Database {
    let mut db = Database::new();
    for f in facts {
        if db.contains(&f) {
            continue;
        }
        let size = db.block(&f.relation, &f.key).len();
        if size >= p.max_block {
            continue;
        }
        let grown = if size == 0 {
            db.repair_count()
        } else {
            db.repair_count() / size as u128 * (size as u128 + 1)
        };
        if grown > p.max_repairs {
            continue;
        }
        db.insert(f).expect("facts follow the query schema");
    }
    db
}

/// One fuzzed (query, database) pair.
#[derive(Debug, Clone)]
pub struct FuzzCase {
    pub query: TreeQuery,
    pub db: Database,
}

/// `count` cases whose queries pass `keep`; deterministic in `seed`.
pub fn corpus(
    seed: u64,
    count: usize,
    tp: &TreeParams,
    dp: &DbParams,
    mut keep: impl FnMut(&TreeQuery, &TreeClassification) -> bool,
) -> Vec<FuzzCase> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let Some(query) = random_tree_where(&mut r, tp, 1000, &mut keep) else {
            break;
        };
        // A few databases per query keep rejection sampling cheap.
        for _ in 0..4 {
            if out.len() == count {
                break;
            }
            let db = random_db(&mut r, &query, dp);
            out.push(FuzzCase {
                query: query.clone(),
                db,
            });
        }
    }
    out
}

/// A random conjunctive query over relations `R` and `S` with simple keys,
/// at most `max_atoms` atoms and `max_vars` variables.
pub fn random_graph_query(rng: &mut impl Rng, max_atoms: usize, max_vars: usize) -> GraphQuery {
    let vars: Vec<String> = (0..max_vars.max(1)).map(|i| format!("v{i}")).collect();
    let arity: BTreeMap<&str, usize> = [("R", rng.gen_range(0..=2)), ("S", rng.gen_range(0..=2))].into();
    let n = rng.gen_range(1..=max_atoms.max(1));
    let atoms = (0..n)
        .map(|_| {
            let rel = if rng.gen_bool(0.6) { "R" } else { "S" };
            let sym = |rng: &mut _| Symbol::var(vars.choose(rng).expect("non-empty").clone());
            let key = vec![sym(rng)];
            let rest = (0..arity[rel]).map(|_| sym(rng)).collect();
            Atom::new(rel, key, rest)
        })
        .collect();
    GraphQuery::from_atoms(atoms).expect("fixed arities per relation")
}
