//! Consistent query answering for rooted tree queries under primary keys.
//!
//! The crate classifies the complexity of `CQA(q)` for rooted tree queries and
//! for the graph-shaped extension, decides certain answers with a
//! grammar-driven fixpoint, and ships a brute-force repair oracle plus the
//! reductions used to exercise both.

pub mod classification;
pub mod engine;
pub mod fuzz;
pub mod gadgets;
pub mod grammar;
pub mod homomorphism;
pub mod model;
pub mod oracle;

pub use model::{
    tree_to_graph, Atom, BlockKey, Database, Fact, GraphQuery, Label, ModelError, ParseError, RelTree, Signature,
    Symbol, TreeQuery, Vertex,
};
