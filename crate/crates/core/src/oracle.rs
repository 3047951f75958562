//! Brute-force ground truth: repair enumeration, conjunctive query
//! evaluation, and exact certain answers on small instances.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::grammar::build_cfg;
use crate::model::{Atom, Database, Fact, GraphQuery, Symbol, TreeQuery};

/// Repair budget used when none is given.
pub const DEFAULT_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("database has {count} repairs, over the cap of {cap}")]
    CapExceeded { count: u128, cap: u128 },
}

/// Blocks of a database in a fixed order, with lookup tables.
#[derive(Debug)]
pub struct BlockTable<'a> {
    blocks: Vec<&'a [Fact]>,
    by_key: HashMap<(&'a str, &'a [String]), usize>,
    by_relation: HashMap<&'a str, Vec<usize>>,
}

impl<'a> BlockTable<'a> {
    pub fn new(db: &'a Database) -> BlockTable<'a> {
        let mut t = BlockTable {
            blocks: Vec::new(),
            by_key: HashMap::new(),
            by_relation: HashMap::new(),
        };
        for (k, facts) in db.blocks() {
            let i = t.blocks.len();
            t.blocks.push(facts);
            t.by_key.insert((k.relation.as_str(), k.key.as_slice()), i);
            t.by_relation.entry(k.relation.as_str()).or_default().push(i);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, i: usize) -> &'a [Fact] {
        self.blocks[i]
    }

    pub fn block_index(&self, relation: &str, key: &[String]) -> Option<usize> {
        // Shared maps are covariant in their key lifetime, so a short-lived probe works.
        let map: &HashMap<(&str, &[String]), usize> = &self.by_key;
        map.get(&(relation, key)).copied()
    }

    pub fn repair_count(&self) -> u128 {
        self.blocks
            .iter()
            .fold(1u128, |acc, b| acc.saturating_mul(b.len() as u128))
    }
}

/// Read access to a set of facts, as needed by query evaluation.
pub trait FactIndex {
    /// Facts of `relation` with the given key.
    fn with_key<'s>(&'s self, relation: &str, key: &[String]) -> Box<dyn Iterator<Item = &'s Fact> + 's>;
    /// All facts of `relation`.
    fn with_relation<'s>(&'s self, relation: &str) -> Box<dyn Iterator<Item = &'s Fact> + 's>;
}

impl FactIndex for Database {
    fn with_key<'s>(&'s self, relation: &str, key: &[String]) -> Box<dyn Iterator<Item = &'s Fact> + 's> {
        Box::new(self.block(relation, key).iter())
    }

    fn with_relation<'s>(&'s self, relation: &str) -> Box<dyn Iterator<Item = &'s Fact> + 's> {
        let relation = relation.to_string();
        Box::new(self.facts().filter(move |f| f.relation == relation))
    }
}

/// One repair, given as a choice of fact per block.
#[derive(Debug, Clone, Copy)]
pub struct RepairView<'t, 'a> {
    pub table: &'t BlockTable<'a>,
    pub choice: &'t [usize],
}

impl<'t, 'a> RepairView<'t, 'a> {
    pub fn facts(&self) -> impl Iterator<Item = &'a Fact> + '_ {
        self.choice.iter().enumerate().map(|(b, &i)| &self.table.blocks[b][i])
    }

    pub fn to_database(&self) -> Database {
        Database::from_facts(self.facts().cloned()).expect("facts come from one database")
    }
}

impl FactIndex for RepairView<'_, '_> {
    fn with_key<'s>(&'s self, relation: &str, key: &[String]) -> Box<dyn Iterator<Item = &'s Fact> + 's> {
        let hit = self.table.block_index(relation, key);
        Box::new(hit.map(move |b| &self.table.blocks[b][self.choice[b]]).into_iter())
    }

    fn with_relation<'s>(&'s self, relation: &str) -> Box<dyn Iterator<Item = &'s Fact> + 's> {
        let blocks = self.table.by_relation.get(relation).cloned().unwrap_or_default();
        Box::new(blocks.into_iter().map(move |b| &self.table.blocks[b][self.choice[b]]))
    }
}

/// Walks all repairs in lexicographic order of their choice vectors.
#[derive(Debug)]
pub struct RepairCursor<'a> {
    table: BlockTable<'a>,
    choice: Vec<usize>,
    started: bool,
    finished: bool,
}

impl<'a> RepairCursor<'a> {
    pub fn new(db: &'a Database, cap: u128) -> Result<RepairCursor<'a>, OracleError> {
        let table = BlockTable::new(db);
        let count = table.repair_count();
        if count > cap {
            return Err(OracleError::CapExceeded { count, cap });
        }
        let choice = vec![0; table.len()];
        Ok(RepairCursor {
            table,
            choice,
            started: false,
            finished: false,
        })
    }

    pub fn total(&self) -> u128 {
        self.table.repair_count()
    }

    /// Advances to the next repair; false once every repair was visited.
    pub fn advance(&mut self) -> bool {
        if self.finished {
            return false;
        }
        if !self.started {
            self.started = true;
            return true;
        }
        for b in (0..self.choice.len()).rev() {
            self.choice[b] += 1;
            if self.choice[b] < self.table.blocks[b].len() {
                return true;
            }
            self.choice[b] = 0;
        }
        self.finished = true;
        false
    }

    pub fn current(&self) -> RepairView<'_, 'a> {
        RepairView {
            table: &self.table,
            choice: &self.choice,
        }
    }

    pub fn choice(&self) -> &[usize] {
        &self.choice
    }
}

/// Every repair of `db`, materialized.
pub fn enumerate_repairs(db: &Database, cap: u128) -> Result<Vec<Database>, OracleError> {
    let mut cur = RepairCursor::new(db, cap)?;
    let mut out = Vec::new();
    while cur.advance() {
        out.push(cur.current().to_database());
    }
    Ok(out)
}

/// A satisfying valuation of `q` in `inst`, if one exists.
pub fn eval_cq(q: &GraphQuery, inst: &impl FactIndex) -> Option<BTreeMap<String, String>> {
    let mut bind = BTreeMap::new();
    let mut done = vec![false; q.len()];
    if extend(q.atoms(), inst, &mut done, &mut bind) {
        Some(bind)
    } else {
        None
    }
}

fn ground(s: &Symbol, bind: &BTreeMap<String, String>) -> Option<String> {
    match s {
        Symbol::Const(c) => Some(c.clone()),
        Symbol::Var(v) => bind.get(v).cloned(),
    }
}

fn matches(atom: &Atom, fact: &Fact, bind: &mut BTreeMap<String, String>) -> Option<Vec<String>> {
    if atom.key.len() != fact.key.len() || atom.rest.len() != fact.rest.len() {
        return None;
    }
    let mut added = Vec::new();
    for (s, c) in atom.args().zip(fact.constants()) {
        let ok = match s {
            Symbol::Const(k) => k == c,
            Symbol::Var(v) => match bind.get(v) {
                Some(b) => b == c,
                None => {
                    bind.insert(v.clone(), c.clone());
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

fn extend(atoms: &[Atom], inst: &impl FactIndex, done: &mut [bool], bind: &mut BTreeMap<String, String>) -> bool {
    // Prefer an atom whose key is fully known; otherwise the one with the most
    // bound arguments.
    let mut pick: Option<(usize, bool, usize)> = None;
    for (i, a) in atoms.iter().enumerate() {
        if done[i] {
            continue;
        }
        let keyed = a.key.iter().all(|s| ground(s, bind).is_some());
        let bound = a.args().filter(|s| ground(s, bind).is_some()).count();
        if pick.is_none_or(|(_, k, b)| (keyed, bound) > (k, b)) {
            pick = Some((i, keyed, bound));
        }
    }
    let Some((i, keyed, _)) = pick else {
        return true;
    };
    let atom = &atoms[i];
    let candidates: Vec<&Fact> = if keyed {
        let key: Vec<String> = atom.key.iter().map(|s| ground(s, bind).expect("keyed")).collect();
        inst.with_key(&atom.relation, &key).collect()
    } else {
        inst.with_relation(&atom.relation).collect()
    };
    done[i] = true;
    for f in candidates {
        if let Some(added) = matches(atom, f, bind) {
            if extend(atoms, inst, done, bind) {
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

/// Whether every repair of `db` satisfies `q`.
pub fn brute_certain(q: &GraphQuery, db: &Database, cap: u128) -> Result<bool, OracleError> {
    Ok(first_falsifying_repair(q, db, cap)?.is_none())
}

/// The first repair (in enumeration order) that falsifies `q`.
pub fn first_falsifying_repair(q: &GraphQuery, db: &Database, cap: u128) -> Result<Option<Database>, OracleError> {
    let mut cur = RepairCursor::new(db, cap)?;
    while cur.advance() {
        let view = cur.current();
        if eval_cq(q, &view).is_none() {
            return Ok(Some(view.to_database()));
        }
    }
    Ok(None)
}

/// Whether some constant starts an accepted tree set in every repair.
pub fn brute_certain_trace(q: &TreeQuery, db: &Database, cap: u128) -> Result<bool, OracleError> {
    Ok(!brute_trace_constants(q, db, cap)?.is_empty())
}

/// Constants starting an accepted tree set in every repair.
pub fn brute_trace_constants(q: &TreeQuery, db: &Database, cap: u128) -> Result<BTreeSet<String>, OracleError> {
    let g = build_cfg(q);
    let mut cur = RepairCursor::new(db, cap)?;
    let mut alive: BTreeSet<String> = db.adom().clone();
    while !alive.is_empty() && cur.advance() {
        let r = cur.current().to_database();
        let ok = g.accepting_constants(q.root(), &r).expect("repairs are consistent");
        alive.retain(|c| ok.contains(c));
    }
    Ok(alive)
}
