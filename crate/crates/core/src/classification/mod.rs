//! Rewinding, the pair conditions, the tree-query classifier, and the
//! extension to graph-shaped queries.
//!
//! Classification records serialize as `key=value` lines with these stable
//! fields: `class`, `c1`, `c2`, `c_branch`, `c_factor`, `c_prefix`,
//! `witness_pairs`, `components`, followed by `component.<i>.*` entries.
//! Condition fields are `-` when they do not apply. Witness pairs are written
//! `condition:x/y:Relation` and separated by `;`.

mod conditions;
mod graph;

use std::fmt;

use thiserror::Error;

use crate::model::{TreeQuery, Vertex};

pub use conditions::{
    c1_direct, c2_direct, check_conditions, classify_tree, preorder_le, rewind, Condition, ConditionReport,
    PairWitness, TreeClassification,
};
pub use graph::{
    attack_graph, berge_acyclic, classify_graph, connected_components, is_tree_query, sjf_version, AttackGraph,
    ComponentReport, GraphClassification, Strength,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("vertex {0} does not exist")]
    UnknownVertex(Vertex),
    #[error("vertex {0} is not an internal vertex")]
    NotInternal(Vertex),
    #[error("vertices {0} and {1} carry different relation names")]
    LabelMismatch(Vertex, Vertex),
    #[error("query is not in GraphBCQ (simple variable keys, no repeated variable in an atom, distinct keys); use the oracle instead")]
    NotGraphBcq,
    #[error("query is not connected")]
    NotConnected,
    #[error("attack graphs need a self-join-free query")]
    SelfJoin,
}

/// Complexity of `CQA(q)`, ordered from easiest to hardest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComplexityClass {
    Fo,
    NlHardInLfp,
    /// L-hard and not in FO; no upper bound is known.
    LHardNotFoUpperOpen,
    CoNpComplete,
}

impl ComplexityClass {
    pub fn name(self) -> &'static str {
        match self {
            ComplexityClass::Fo => "FO",
            ComplexityClass::NlHardInLfp => "NLHARD_IN_LFP",
            ComplexityClass::LHardNotFoUpperOpen => "LHARD_NOT_FO_UPPER_OPEN",
            ComplexityClass::CoNpComplete => "CONP_COMPLETE",
        }
    }
}

impl fmt::Display for ComplexityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An ordered list of `key=value` fields.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Record {
    pub fields: Vec<(String, String)>,
}

impl Record {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.fields.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.fields {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

fn witness_text(q: &TreeQuery, report: &ConditionReport) -> String {
    if report.witnesses.is_empty() {
        return "-".into();
    }
    let name = |v: Vertex| q.var_name(v).unwrap_or_else(|| v.to_string());
    report
        .witnesses
        .iter()
        .map(|w| format!("{}:{}/{}:{}", w.condition, name(w.x), name(w.y), w.relation))
        .collect::<Vec<_>>()
        .join(";")
}

fn push_conditions(rec: &mut Record, prefix: &str, q: &TreeQuery, r: &ConditionReport) {
    rec.push(format!("{prefix}c1"), r.c1);
    rec.push(format!("{prefix}c2"), r.c2);
    rec.push(format!("{prefix}c_branch"), r.c_branch);
    rec.push(format!("{prefix}c_factor"), r.c_factor);
    rec.push(format!("{prefix}c_prefix"), r.c_prefix);
    rec.push(format!("{prefix}witness_pairs"), witness_text(q, r));
}

pub fn tree_record(q: &TreeQuery, c: &TreeClassification) -> Record {
    let mut rec = Record::default();
    rec.push("class", c.class);
    push_conditions(&mut rec, "", q, &c.report);
    rec.push("components", 1);
    rec.push("component.0.query", q);
    rec.push("component.0.class", c.class);
    rec
}

pub fn graph_record(c: &GraphClassification) -> Record {
    let mut rec = Record::default();
    rec.push("class", c.class);
    let all_trees = c.components.iter().all(|k| k.conditions.is_some());
    let all = |f: fn(&ConditionReport) -> bool| {
        if all_trees {
            c.components
                .iter()
                .all(|k| f(k.conditions.as_ref().expect("tree component")))
                .to_string()
        } else {
            "-".into()
        }
    };
    rec.push("c1", all(|r| r.c1));
    rec.push("c2", all(|r| r.c2));
    rec.push("c_branch", all(|r| r.c_branch));
    rec.push("c_factor", all(|r| r.c_factor));
    rec.push("c_prefix", all(|r| r.c_prefix));
    let pairs: Vec<String> = c
        .components
        .iter()
        .enumerate()
        .filter_map(|(i, k)| {
            let (t, r) = (k.tree.as_ref()?, k.conditions.as_ref()?);
            (!r.witnesses.is_empty()).then(|| format!("{i}@{}", witness_text(t, r)))
        })
        .collect();
    rec.push(
        "witness_pairs",
        if pairs.is_empty() { "-".into() } else { pairs.join(";") },
    );
    rec.push("upper_bound_open", c.upper_bound_open);
    rec.push("core", &c.core);
    rec.push("components", c.components.len());
    for (i, k) in c.components.iter().enumerate() {
        let p = format!("component.{i}.");
        rec.push(format!("{p}query"), &k.query);
        rec.push(format!("{p}class"), k.class);
        rec.push(format!("{p}berge_acyclic"), k.berge_acyclic);
        match (&k.tree, &k.conditions) {
            (Some(t), Some(r)) => {
                rec.push(format!("{p}tree"), t);
                push_conditions(&mut rec, &p, t, r);
            }
            _ => rec.push(format!("{p}tree"), "-"),
        }
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GraphQuery;

    #[test]
    fn class_order() {
        assert!(ComplexityClass::Fo < ComplexityClass::NlHardInLfp);
        assert!(ComplexityClass::NlHardInLfp < ComplexityClass::LHardNotFoUpperOpen);
        assert!(ComplexityClass::LHardNotFoUpperOpen < ComplexityClass::CoNpComplete);
    }

    #[test]
    fn tree_record_fields() {
        let q = TreeQuery::parse("C(R(A,B),R(B,A))").unwrap();
        let rec = tree_record(&q, &classify_tree(&q));
        assert_eq!(rec.get("class"), Some("CONP_COMPLETE"));
        assert_eq!(rec.get("c_branch"), Some("false"));
        assert_eq!(rec.get("witness_pairs"), Some("branch:x1/x4:R"));
        let text = rec.to_string();
        for key in [
            "class",
            "c1",
            "c2",
            "c_branch",
            "c_factor",
            "c_prefix",
            "witness_pairs",
            "components",
        ] {
            assert!(text.lines().any(|l| l.starts_with(&format!("{key}="))), "{key}");
        }
    }

    #[test]
    fn graph_record_fields() {
        let q = GraphQuery::parse("R(x; y, z), R(z; x, y)").unwrap();
        let rec = graph_record(&classify_graph(&q).unwrap());
        assert_eq!(rec.get("class"), Some("LHARD_NOT_FO_UPPER_OPEN"));
        assert_eq!(rec.get("c1"), Some("-"));
        assert_eq!(rec.get("upper_bound_open"), Some("true"));
        assert_eq!(rec.get("component.0.tree"), Some("-"));
    }
}
