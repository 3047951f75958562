use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::database::Signature;
use super::syntax;
use super::{ModelError, Symbol};

/// `R(key; rest)`: the first `key.len()` positions form the primary key.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub relation: String,
    pub key: Vec<Symbol>,
    pub rest: Vec<Symbol>,
}

impl Atom {
    pub fn new(relation: impl Into<String>, key: Vec<Symbol>, rest: Vec<Symbol>) -> Atom {
        Atom {
            relation: relation.into(),
            key,
            rest,
        }
    }

    pub fn signature(&self) -> Signature {
        Signature {
            key_arity: self.key.len(),
            arity: self.key.len() + self.rest.len(),
        }
    }

    pub fn args(&self) -> impl Iterator<Item = &Symbol> {
        self.key.iter().chain(self.rest.iter())
    }

    pub fn vars(&self) -> BTreeSet<&str> {
        self.args().filter_map(Symbol::as_var).collect()
    }

    pub fn key_vars(&self) -> BTreeSet<&str> {
        self.key.iter().filter_map(Symbol::as_var).collect()
    }

    /// The single key variable, when the key is one variable.
    pub fn simple_key(&self) -> Option<&str> {
        match self.key.as_slice() {
            [Symbol::Var(v)] => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |xs: &[Symbol]| xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ");
        if self.rest.is_empty() {
            write!(f, "{}({};)", self.relation, join(&self.key))
        } else {
            write!(f, "{}({}; {})", self.relation, join(&self.key), join(&self.rest))
        }
    }
}

/// A Boolean conjunctive query given as a set of atoms (insertion order kept).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GraphQuery {
    atoms: Vec<Atom>,
}

impl GraphQuery {
    pub fn parse(text: &str) -> Result<GraphQuery, ModelError> {
        GraphQuery::from_atoms(syntax::parse_graph_atoms(text)?)
    }

    /// Builds a query, dropping duplicate atoms and checking that every
    /// relation name is used with one signature.
    pub fn from_atoms(atoms: Vec<Atom>) -> Result<GraphQuery, ModelError> {
        if atoms.is_empty() {
            return Err(ModelError::EmptyQuery);
        }
        let q = GraphQuery::from_atoms_unchecked(atoms);
        q.schema()?;
        Ok(q)
    }

    pub(crate) fn from_atoms_unchecked(atoms: Vec<Atom>) -> GraphQuery {
        let mut seen = BTreeSet::new();
        let atoms = atoms.into_iter().filter(|a| seen.insert(a.clone())).collect();
        GraphQuery { atoms }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn schema(&self) -> Result<BTreeMap<String, Signature>, ModelError> {
        let mut schema: BTreeMap<String, Signature> = BTreeMap::new();
        for a in &self.atoms {
            let sig = a.signature();
            match schema.get(&a.relation) {
                Some(&s) if s != sig => {
                    return Err(ModelError::SignatureConflict {
                        relation: a.relation.clone(),
                        first: s,
                        second: sig,
                    })
                }
                _ => {
                    schema.insert(a.relation.clone(), sig);
                }
            }
        }
        Ok(schema)
    }

    pub fn vars(&self) -> BTreeSet<&str> {
        self.atoms.iter().flat_map(|a| a.vars()).collect()
    }

    pub fn constants(&self) -> BTreeSet<&str> {
        self.atoms
            .iter()
            .flat_map(|a| a.args())
            .filter_map(|s| match s {
                Symbol::Const(c) => Some(c.as_str()),
                Symbol::Var(_) => None,
            })
            .collect()
    }

    pub fn key_arities(&self) -> BTreeMap<&str, usize> {
        self.atoms.iter().map(|a| (a.relation.as_str(), a.key.len())).collect()
    }

    /// Simple variable keys, no variable repeated inside an atom, and no two
    /// atoms sharing their key variable.
    pub fn is_graphbcq(&self) -> bool {
        let mut keys = BTreeSet::new();
        for a in &self.atoms {
            let Some(k) = a.simple_key() else {
                return false;
            };
            if !keys.insert(k) {
                return false;
            }
            let mut seen = BTreeSet::new();
            if !a.args().filter_map(Symbol::as_var).all(|v| seen.insert(v)) {
                return false;
            }
        }
        true
    }

    pub fn is_self_join_free(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.atoms.iter().all(|a| seen.insert(a.relation.as_str()))
    }

    /// The query restricted to the atoms at the given indices (in that order).
    pub fn subquery(&self, indices: &[usize]) -> GraphQuery {
        GraphQuery::from_atoms_unchecked(indices.iter().map(|&i| self.atoms[i].clone()).collect())
    }

    /// Applies a variable substitution; unmapped variables stay.
    pub fn substitute(&self, map: &BTreeMap<String, Symbol>) -> GraphQuery {
        let sub = |s: &Symbol| match s {
            Symbol::Var(v) => map.get(v).cloned().unwrap_or_else(|| s.clone()),
            Symbol::Const(_) => s.clone(),
        };
        GraphQuery::from_atoms_unchecked(
            self.atoms
                .iter()
                .map(|a| Atom {
                    relation: a.relation.clone(),
                    key: a.key.iter().map(sub).collect(),
                    rest: a.rest.iter().map(sub).collect(),
                })
                .collect(),
        )
    }
}

impl fmt::Display for GraphQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}
