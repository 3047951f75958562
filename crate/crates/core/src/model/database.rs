use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::syntax::{self, ParseError};
use super::ModelError;

/// A ground atom.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fact {
    pub relation: String,
    pub key: Vec<String>,
    pub rest: Vec<String>,
}

impl Fact {
    pub fn new(relation: impl Into<String>, key: Vec<String>, rest: Vec<String>) -> Fact {
        Fact {
            relation: relation.into(),
            key,
            rest,
        }
    }

    /// Convenience constructor for facts with a single key constant.
    pub fn simple(relation: &str, key: &str, rest: &[&str]) -> Fact {
        Fact::new(
            relation,
            vec![key.to_string()],
            rest.iter().map(|s| s.to_string()).collect(),
        )
    }

    /// Parses one fact in fact-file syntax.
    pub fn parse(text: &str) -> Result<Fact, ParseError> {
        syntax::parse_fact_line(text, 1)?.ok_or_else(|| ParseError {
            line: 1,
            column: 1,
            message: "empty fact".into(),
        })
    }

    pub fn signature(&self) -> Signature {
        Signature {
            key_arity: self.key.len(),
            arity: self.key.len() + self.rest.len(),
        }
    }

    pub fn block_key(&self) -> BlockKey {
        BlockKey {
            relation: self.relation.clone(),
            key: self.key.clone(),
        }
    }

    pub fn constants(&self) -> impl Iterator<Item = &String> {
        self.key.iter().chain(self.rest.iter())
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |xs: &[String]| {
            xs.iter()
                .map(|c| syntax::fact_constant_text(c))
                .collect::<Vec<_>>()
                .join(", ")
        };
        if self.rest.is_empty() {
            write!(f, "{}({};)", self.relation, join(&self.key))
        } else {
            write!(f, "{}({}; {})", self.relation, join(&self.key), join(&self.rest))
        }
    }
}

/// Key arity and total arity of a relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature {
    pub key_arity: usize,
    pub arity: usize,
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.key_arity, self.arity)
    }
}

/// Identifies a block `R(c̄, *)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockKey {
    pub relation: String,
    pub key: Vec<String>,
}

impl fmt::Display for BlockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},*)", self.relation, self.key.join(","))
    }
}

/// A finite set of facts grouped into blocks of key-equal facts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Database {
    blocks: BTreeMap<BlockKey, Vec<Fact>>,
    schema: BTreeMap<String, Signature>,
    adom: BTreeSet<String>,
    len: usize,
}

impl Database {
    pub fn new() -> Database {
        Database::default()
    }

    pub fn parse(text: &str) -> Result<Database, ParseError> {
        syntax::parse_database(text)
    }

    pub fn from_facts(facts: impl IntoIterator<Item = Fact>) -> Result<Database, ModelError> {
        let mut db = Database::new();
        for f in facts {
            db.insert(f)?;
        }
        Ok(db)
    }

    pub(crate) fn from_numbered_facts(facts: Vec<(usize, Fact)>) -> Result<Database, ParseError> {
        let mut db = Database::new();
        for (line, f) in facts {
            db.insert(f).map_err(|e| ParseError {
                line,
                column: 1,
                message: e.to_string(),
            })?;
        }
        Ok(db)
    }

    /// Adds a fact; returns whether it was new.
    pub fn insert(&mut self, fact: Fact) -> Result<bool, ModelError> {
        let sig = fact.signature();
        match self.schema.get(&fact.relation) {
            Some(&s) if s != sig => {
                return Err(ModelError::SignatureConflict {
                    relation: fact.relation.clone(),
                    first: s,
                    second: sig,
                })
            }
            Some(_) => {}
            None => {
                self.schema.insert(fact.relation.clone(), sig);
            }
        }
        let block = self.blocks.entry(fact.block_key()).or_default();
        match block.binary_search(&fact) {
            Ok(_) => Ok(false),
            Err(pos) => {
                self.adom.extend(fact.constants().cloned());
                block.insert(pos, fact);
                self.len += 1;
                Ok(true)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn facts(&self) -> impl Iterator<Item = &Fact> {
        self.blocks.values().flatten()
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.blocks
            .get(&fact.block_key())
            .is_some_and(|b| b.binary_search(fact).is_ok())
    }

    /// Blocks in key order; each block's facts are sorted.
    pub fn blocks(&self) -> impl Iterator<Item = (&BlockKey, &[Fact])> {
        self.blocks.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// The block `relation(key, *)`, empty if absent.
    pub fn block(&self, relation: &str, key: &[String]) -> &[Fact] {
        // BlockKey owns its strings, so build a probe.
        let probe = BlockKey {
            relation: relation.to_string(),
            key: key.to_vec(),
        };
        self.blocks.get(&probe).map_or(&[], Vec::as_slice)
    }

    pub fn schema(&self) -> &BTreeMap<String, Signature> {
        &self.schema
    }

    pub fn adom(&self) -> &BTreeSet<String> {
        &self.adom
    }

    pub fn is_consistent(&self) -> bool {
        self.blocks.values().all(|b| b.len() == 1)
    }

    /// Number of repairs, saturating at `u128::MAX`.
    pub fn repair_count(&self) -> u128 {
        self.blocks
            .values()
            .fold(1u128, |acc, b| acc.saturating_mul(b.len() as u128))
    }

    /// Sizes of the blocks holding more than one fact, in block order.
    pub fn inconsistent_blocks(&self) -> Vec<(&BlockKey, usize)> {
        self.blocks
            .iter()
            .filter(|(_, b)| b.len() > 1)
            .map(|(k, b)| (k, b.len()))
            .collect()
    }

    /// Union of two databases.
    pub fn union(&self, other: &Database) -> Result<Database, ModelError> {
        let mut db = self.clone();
        for f in other.facts() {
            db.insert(f.clone())?;
        }
        Ok(db)
    }
}

impl fmt::Display for Database {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fact in self.facts() {
            writeln!(f, "{fact}")?;
        }
        Ok(())
    }
}
