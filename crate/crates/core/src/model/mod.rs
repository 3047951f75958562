//! Queries, trees, and databases, with their text syntaxes.

mod database;
mod graph;
mod syntax;
mod tree;

use std::fmt;

use thiserror::Error;

pub use database::{BlockKey, Database, Fact, Signature};
pub use graph::{Atom, GraphQuery};
pub use syntax::ParseError;
pub use tree::{tree_to_graph, Label, RelTree, TreeQuery, Vertex};

/// A query term: variables and constants live in disjoint namespaces.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Var(String),
    Const(String),
}

impl Symbol {
    pub fn var(name: impl Into<String>) -> Symbol {
        Symbol::Var(name.into())
    }

    pub fn constant(value: impl Into<String>) -> Symbol {
        Symbol::Const(value.into())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Symbol::Var(v) => Some(v),
            Symbol::Const(_) => None,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Symbol::Var(_))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Var(v) => f.write_str(v),
            Symbol::Const(c) => write!(f, "'{c}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("syntax error at {0}")]
    Parse(#[from] ParseError),
    #[error("the root must be a relation atom, not `_` or a constant")]
    RootNotAtom,
    #[error("relation `{relation}` used with {first} and with {second} children")]
    ArityConflict {
        relation: String,
        first: usize,
        second: usize,
    },
    #[error("`{0}` is used both as a unary leaf and as an internal relation")]
    UnaryAndInternal(String),
    #[error("relation `{relation}` has conflicting signatures {first} and {second}")]
    SignatureConflict {
        relation: String,
        first: Signature,
        second: Signature,
    },
    #[error("empty query")]
    EmptyQuery,
}
