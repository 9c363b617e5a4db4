//! JSON interchange format for leaves, diagrams and queries.
//!
//! ```json
//! {
//!   "leaves": {
//!     "B": {
//!       "states": ["enr1", "t1", "exr1", "exl1"],
//!       "transitions": [["enr1", "go", [["exr1", "7/10"], ["t1", "0.3"]]],
//!                       ["t1", "go", [["exl1", 1]]]],
//!       "right_entrances": ["enr1"], "right_exits": ["exr1"], "left_exits": ["exl1"]
//!     }
//!   },
//!   "diagram": {"seq": [{"leaf": "A"}, {"leaf": "B"}]},
//!   "query": {"entrance": "A#1/enr1", "weights": {"B#1/exr1": "1", "A#1/exl1": "0"}}
//! }
//! ```

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::{ComponentIndex, Node, OpenMdp, StringDiagram};
use crate::error::{Error, Result};
use crate::mdp::MdpBuilder;
use crate::numeric::{format_rational, parse_rational, ratio_to_f64, Rational};

/// A probability or weight: a JSON number, a decimal string or `"num/den"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbSpec {
    Text(String),
    Number(serde_json::Number),
}

impl ProbSpec {
    pub fn exact(q: &Rational) -> Self {
        ProbSpec::Text(format_rational(q))
    }

    pub fn to_rational(&self) -> Result<Rational> {
        match self {
            ProbSpec::Text(s) => parse_rational(s),
            ProbSpec::Number(n) => parse_rational(&n.to_string()),
        }
    }
}

/// `[source, action, [[target, probability], ...]]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec(pub String, pub String, pub Vec<(String, ProbSpec)>);

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeafSpec {
    pub states: Vec<String>,
    pub transitions: Vec<TransitionSpec>,
    #[serde(default)]
    pub right_entrances: Vec<String>,
    #[serde(default)]
    pub left_entrances: Vec<String>,
    #[serde(default)]
    pub right_exits: Vec<String>,
    #[serde(default)]
    pub left_exits: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagramSpec {
    Leaf(String),
    Seq(Vec<DiagramSpec>),
    Sum(Vec<DiagramSpec>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    /// Flattened name of a global entrance; defaults to the first one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entrance: Option<String>,
    /// Weight per flattened global exit name; every global exit needs an entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<String, ProbSpec>>,
    /// Global exit receiving weight one when `weights` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<ProbSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub leaves: BTreeMap<String, LeafSpec>,
    pub diagram: DiagramSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<QuerySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

/// A resolved query: which global entrance, and a weight per global exit.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub entrance: usize,
    pub weights: Vec<Rational>,
    pub epsilon: Option<f64>,
}

impl Query {
    pub fn float_weights(&self) -> Vec<f64> {
        self.weights.iter().map(ratio_to_f64).collect()
    }
}

/// A parsed model: the diagram, its index and the query.
#[derive(Debug, Clone)]
pub struct Model {
    pub diagram: StringDiagram,
    pub index: ComponentIndex,
    pub query: Query,
    pub metadata: Option<serde_json::Value>,
}

impl Model {
    pub fn from_json(text: &str) -> Result<Model> {
        ModelFile::from_json(text)?.into_model()
    }
}

impl ModelFile {
    /// Parses JSON, reporting the JSON path of structural errors.
    pub fn from_json(text: &str) -> Result<ModelFile> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Model { path, message: e.into_inner().to_string() }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn to_json_compact(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn into_model(self) -> Result<Model> {
        let mut table = BTreeMap::new();
        for (name, spec) in &self.leaves {
            table.insert(name.clone(), Arc::new(spec.to_open(&format!("leaves.{name}"))?));
        }
        let root = self.diagram.to_node("diagram")?;
        let diagram = StringDiagram::new(root, table)?;
        let index = diagram.index()?;
        let query = resolve_query(&diagram, &index, self.query.as_ref())?;
        Ok(Model { diagram, index, query, metadata: self.metadata })
    }

    /// Serializes a diagram; leaves carry exact probabilities.
    pub fn from_diagram(d: &StringDiagram, query: Option<QuerySpec>) -> ModelFile {
        let leaves = d.leaf_table().iter().map(|(k, v)| (k.clone(), LeafSpec::from_open(v))).collect();
        ModelFile { leaves, diagram: DiagramSpec::from_node(d.root()), query, metadata: None }
    }
}

impl LeafSpec {
    pub fn from_open(o: &OpenMdp) -> LeafSpec {
        let m = o.mdp();
        let mut transitions = Vec::new();
        for s in 0..m.num_states() {
            for a in m.actions(s) {
                let dist = match m.exact_probs(a) {
                    Some(e) => m
                        .successors(a)
                        .iter()
                        .zip(e)
                        .map(|(&t, q)| (m.state_name(t as usize).to_string(), ProbSpec::exact(q)))
                        .collect(),
                    None => m
                        .transitions(a)
                        .map(|(t, p)| (m.state_name(t).to_string(), ProbSpec::Text(format!("{p:e}"))))
                        .collect(),
                };
                transitions.push(TransitionSpec(m.state_name(s).to_string(), m.action_label(a).to_string(), dist));
            }
        }
        let names = |v: &[usize]| v.iter().map(|&s| m.state_name(s).to_string()).collect();
        LeafSpec {
            states: m.state_names().to_vec(),
            transitions,
            right_entrances: names(o.right_entrances()),
            left_entrances: names(o.left_entrances()),
            right_exits: names(o.right_exits()),
            left_exits: names(o.left_exits()),
        }
    }

    pub fn to_open(&self, path: &str) -> Result<OpenMdp> {
        let mut b = MdpBuilder::exact();
        for (k, s) in self.states.iter().enumerate() {
            if b.lookup(s).is_some() {
                return Err(Error::Model {
                    path: format!("{path}.states[{k}]"),
                    message: format!("duplicate state {s:?}"),
                });
            }
            b.state(s.clone());
        }
        for (k, TransitionSpec(src, action, dist)) in self.transitions.iter().enumerate() {
            let here = format!("{path}.transitions[{k}]");
            let unknown = |s: &str| Error::Model { path: here.clone(), message: format!("unknown state {s:?}") };
            let from = b.lookup(src).ok_or_else(|| unknown(src))?;
            let mut targets = Vec::with_capacity(dist.len());
            for (dst, p) in dist {
                let to = b.lookup(dst).ok_or_else(|| unknown(dst))?;
                let q = p.to_rational().map_err(|e| Error::Model { path: here.clone(), message: e.to_string() })?;
                targets.push((to, q));
            }
            b.action(from, action.clone(), targets);
        }
        let mdp = b.build().map_err(|e| Error::Model { path: path.to_string(), message: e.to_string() })?;
        let look = |field: &str, names: &[String]| -> Result<Vec<usize>> {
            names
                .iter()
                .enumerate()
                .map(|(k, n)| {
                    mdp.state_index(n).ok_or_else(|| Error::Model {
                        path: format!("{path}.{field}[{k}]"),
                        message: format!("unknown state {n:?}"),
                    })
                })
                .collect()
        };
        let ri = look("right_entrances", &self.right_entrances)?;
        let li = look("left_entrances", &self.left_entrances)?;
        let ro = look("right_exits", &self.right_exits)?;
        let lo = look("left_exits", &self.left_exits)?;
        OpenMdp::new(mdp, ri, li, ro, lo).map_err(|e| Error::Model { path: path.to_string(), message: e.to_string() })
    }
}

impl DiagramSpec {
    pub fn to_node(&self, path: &str) -> Result<Node> {
        let fold = |items: &[DiagramSpec], key: &str, f: fn(Node, Node) -> Node| -> Result<Node> {
            let nodes = items
                .iter()
                .enumerate()
                .map(|(k, d)| d.to_node(&format!("{path}.{key}[{k}]")))
                .collect::<Result<Vec<_>>>()?;
            nodes
                .into_iter()
                .reduce(f)
                .ok_or_else(|| Error::Model { path: format!("{path}.{key}"), message: "empty list".into() })
        };
        match self {
            DiagramSpec::Leaf(n) => Ok(Node::Leaf(n.clone())),
            DiagramSpec::Seq(items) => fold(items, "seq", Node::seq),
            DiagramSpec::Sum(items) => fold(items, "sum", Node::sum),
        }
    }

    /// Inverse of [`DiagramSpec::to_node`]; left spines become flat lists.
    pub fn from_node(node: &Node) -> DiagramSpec {
        match node {
            Node::Leaf(n) => DiagramSpec::Leaf(n.clone()),
            Node::Seq(..) => DiagramSpec::Seq(Self::spine(node, true)),
            Node::Sum(..) => DiagramSpec::Sum(Self::spine(node, false)),
        }
    }

    fn spine(node: &Node, seq: bool) -> Vec<DiagramSpec> {
        match (node, seq) {
            (Node::Seq(a, b), true) | (Node::Sum(a, b), false) => {
                let mut items = Self::spine(a, seq);
                items.push(Self::from_node(b));
                items
            }
            _ => vec![Self::from_node(node)],
        }
    }
}

fn resolve_query(d: &StringDiagram, index: &ComponentIndex, spec: Option<&QuerySpec>) -> Result<Query> {
    let entrances = index.global_entrance_names(d);
    let exits = index.global_exit_names(d);
    let default = QuerySpec::default();
    let spec = spec.unwrap_or(&default);
    let entrance = match &spec.entrance {
        Some(name) => entrances
            .iter()
            .position(|e| e == name)
            .ok_or_else(|| Error::Query(format!("{name:?} is not a global entrance")))?,
        None if entrances.is_empty() => return Err(Error::Query("diagram has no global entrance".into())),
        None => 0,
    };
    let weights = match (&spec.weights, &spec.goal) {
        (Some(map), _) => {
            let position: HashMap<&str, usize> = exits.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
            for key in map.keys() {
                if !position.contains_key(key.as_str()) {
                    return Err(Error::Query(format!("weight given for {key:?}, which is not a global exit")));
                }
            }
            let mut w = Vec::with_capacity(exits.len());
            for name in &exits {
                let p =
                    map.get(name).ok_or_else(|| Error::Query(format!("missing weight for global exit {name:?}")))?;
                let q = p.to_rational().map_err(|e| Error::Query(format!("weight of {name:?}: {e}")))?;
                if q < Rational::zero() || q > Rational::one() {
                    return Err(Error::Query(format!("weight of {name:?} outside [0,1]")));
                }
                w.push(q);
            }
            w
        }
        (None, Some(goal)) => {
            let pos = exits
                .iter()
                .position(|e| e == goal)
                .ok_or_else(|| Error::Query(format!("goal {goal:?} is not a global exit")))?;
            let mut w = vec![Rational::zero(); exits.len()];
            w[pos] = Rational::one();
            w
        }
        (None, None) => return Err(Error::Query("query needs either weights or a goal exit".into())),
    };
    let epsilon = match &spec.epsilon {
        Some(e) => Some(ratio_to_f64(&e.to_rational()?)),
        None => None,
    };
    Ok(Query { entrance, weights, epsilon })
}
