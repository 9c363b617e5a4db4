//! String diagrams over open MDPs: the AST, its semantics, and the component index.

mod format;
mod index;
mod open;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{DiagramSpec, LeafSpec, Model, ModelFile, ProbSpec, Query, QuerySpec, TransitionSpec};
pub use index::{Component, ComponentIndex};
pub use open::{seq_compose, sum_compose, Arity, OpenMdp};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Leaf(String),
    Seq(Box<Node>, Box<Node>),
    Sum(Box<Node>, Box<Node>),
}

impl Node {
    pub fn leaf(name: impl Into<String>) -> Node {
        Node::Leaf(name.into())
    }

    pub fn seq(a: Node, b: Node) -> Node {
        Node::Seq(Box::new(a), Box::new(b))
    }

    pub fn sum(a: Node, b: Node) -> Node {
        Node::Sum(Box::new(a), Box::new(b))
    }

    /// Left fold of `⨟` over a non-empty list.
    pub fn seq_all(nodes: impl IntoIterator<Item = Node>) -> Option<Node> {
        nodes.into_iter().reduce(Node::seq)
    }

    /// Left fold of `⊕` over a non-empty list.
    pub fn sum_all(nodes: impl IntoIterator<Item = Node>) -> Option<Node> {
        nodes.into_iter().reduce(Node::sum)
    }

    /// Leaf names in left-to-right order, with repetitions.
    pub fn leaf_occurrences(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Node::Leaf(n) => out.push(n),
            Node::Seq(a, b) | Node::Sum(a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
        }
    }
}

/// A sequential composition whose middle interfaces disagree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArityError {
    /// Path from the root, `$` followed by `.left` / `.right` steps.
    pub path: String,
    pub left: Arity,
    pub right: Arity,
}

impl fmt::Display for ArityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at {}: cannot compose {} with {}", self.path, self.left, self.right)
    }
}

/// A diagram together with the table of nominal leaves it refers to.
#[derive(Debug, Clone)]
pub struct StringDiagram {
    root: Node,
    leaves: BTreeMap<String, Arc<OpenMdp>>,
}

impl StringDiagram {
    /// Checks that every leaf resolves; arities are checked by [`StringDiagram::validate_arities`].
    pub fn new(root: Node, leaves: BTreeMap<String, Arc<OpenMdp>>) -> Result<Self> {
        for name in root.leaf_occurrences() {
            if !leaves.contains_key(name) {
                return Err(Error::Model { path: format!("diagram leaf {name:?}"), message: "unknown leaf".into() });
            }
        }
        Ok(Self { root, leaves })
    }

    /// Convenience constructor that also validates arities.
    pub fn build(root: Node, leaves: impl IntoIterator<Item = (String, OpenMdp)>) -> Result<Self> {
        let table = leaves.into_iter().map(|(k, v)| (k, Arc::new(v))).collect();
        let d = Self::new(root, table)?;
        d.validate_arities().map_err(Error::Arity)?;
        Ok(d)
    }

    pub fn single(name: &str, leaf: OpenMdp) -> Self {
        Self::build(Node::leaf(name), [(name.to_string(), leaf)]).expect("single leaf is valid")
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn leaf_table(&self) -> &BTreeMap<String, Arc<OpenMdp>> {
        &self.leaves
    }

    pub fn leaf(&self, name: &str) -> &Arc<OpenMdp> {
        &self.leaves[name]
    }

    /// Every sequential composition with mismatched middle arities.
    pub fn validate_arities(&self) -> std::result::Result<Arity, Vec<ArityError>> {
        let mut errors = Vec::new();
        let arity = self.arity_of(&self.root, "$".to_string(), &mut errors);
        if errors.is_empty() {
            Ok(arity)
        } else {
            Err(errors)
        }
    }

    fn arity_of(&self, node: &Node, path: String, errors: &mut Vec<ArityError>) -> Arity {
        match node {
            Node::Leaf(n) => self.leaves[n].arity(),
            Node::Sum(a, b) => {
                let x = self.arity_of(a, format!("{path}.left"), errors);
                let y = self.arity_of(b, format!("{path}.right"), errors);
                x.sum(y)
            }
            Node::Seq(a, b) => {
                let x = self.arity_of(a, format!("{path}.left"), errors);
                let y = self.arity_of(b, format!("{path}.right"), errors);
                x.seq(y).unwrap_or_else(|| {
                    errors.push(ArityError { path, left: x, right: y });
                    Arity::new(x.m_right, x.m_left, y.n_right, y.n_left)
                })
            }
        }
    }

    pub fn arity(&self) -> Result<Arity> {
        self.validate_arities().map_err(Error::Arity)
    }

    pub fn index(&self) -> Result<ComponentIndex> {
        self.arity()?;
        Ok(ComponentIndex::new(self))
    }

    /// The operational semantics as one open MDP.
    ///
    /// States are named `occurrence/state`, where the occurrence id is the leaf
    /// name with a 1-based per-leaf counter, e.g. `A#2/s1`.
    pub fn flatten(&self) -> Result<OpenMdp> {
        let index = self.index()?;
        index.flatten(self)
    }

    /// Semantics by folding [`seq_compose`] and [`sum_compose`] over the AST.
    ///
    /// Produces the same state names as [`StringDiagram::flatten`]; quadratic
    /// in the depth, so meant for cross-checks.
    pub fn flatten_by_fold(&self) -> Result<OpenMdp> {
        self.arity()?;
        let mut counters: HashMap<&str, usize> = HashMap::new();
        self.fold(&self.root, &mut counters)
    }

    fn fold<'a>(&'a self, node: &'a Node, counters: &mut HashMap<&'a str, usize>) -> Result<OpenMdp> {
        match node {
            Node::Leaf(n) => {
                let k = counters.entry(n).or_insert(0);
                *k += 1;
                Ok(self.leaves[n].renamed(&format!("{n}#{k}/")))
            }
            Node::Seq(a, b) => {
                let x = self.fold(a, counters)?;
                let y = self.fold(b, counters)?;
                seq_compose(&x, &y)
            }
            Node::Sum(a, b) => {
                let x = self.fold(a, counters)?;
                let y = self.fold(b, counters)?;
                sum_compose(&x, &y)
            }
        }
    }
}
