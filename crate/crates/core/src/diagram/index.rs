use std::collections::{HashMap, HashSet};
use std::ops::Range;

use super::open::{assemble, IoSpec, OpenMdp, Part};
use super::{Node, StringDiagram};
use crate::error::Result;

/// One occurrence of a nominal leaf in a diagram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub leaf: String,
    /// Leaf name plus a 1-based per-leaf counter, e.g. `A#2`.
    pub occurrence: String,
    /// Local entrance ids: the leaf's right entrances, then its left entrances.
    pub entrances: Range<usize>,
    /// Local exit ids: the leaf's right exits, then its left exits.
    pub exits: Range<usize>,
}

/// Components, local and global open ends, and the wiring of a diagram.
#[derive(Debug, Clone)]
pub struct ComponentIndex {
    /// Occurrences in left-to-right order.
    pub components: Vec<Component>,
    /// Distinct leaf names in order of first occurrence.
    pub leaves: Vec<String>,
    /// `(component, leaf state)` of every local entrance.
    pub local_entrances: Vec<(usize, usize)>,
    /// `(component, leaf state)` of every local exit.
    pub local_exits: Vec<(usize, usize)>,
    /// Local entrance ids surviving composition: right entrances, then left ones.
    pub global_entrances: Vec<usize>,
    /// Local exit ids surviving composition: right exits, then left ones.
    pub global_exits: Vec<usize>,
    /// Partner entrance of each sequentially removed exit.
    pub wiring: Vec<Option<usize>>,
    /// Component processing order: right child first.
    pub topo_order: Vec<usize>,
    /// Position in `global_exits` of each local exit, if global.
    pub global_exit_pos: Vec<Option<usize>>,
}

type End = (usize, usize);

struct Ends {
    ri: Vec<End>,
    li: Vec<End>,
    ro: Vec<End>,
    lo: Vec<End>,
}

struct Builder<'a> {
    diagram: &'a StringDiagram,
    components: Vec<Component>,
    counters: HashMap<&'a str, usize>,
    local_entrances: Vec<End>,
    local_exits: Vec<End>,
    wires: Vec<(End, End)>,
}

impl<'a> Builder<'a> {
    fn visit(&mut self, node: &'a Node) -> Ends {
        match node {
            Node::Leaf(name) => {
                let leaf = self.diagram.leaf(name);
                let c = self.components.len();
                let k = self.counters.entry(name.as_str()).or_insert(0);
                *k += 1;
                let e0 = self.local_entrances.len();
                self.local_entrances.extend(leaf.entrances().into_iter().map(|s| (c, s)));
                let x0 = self.local_exits.len();
                self.local_exits.extend(leaf.exits().into_iter().map(|s| (c, s)));
                self.components.push(Component {
                    leaf: name.clone(),
                    occurrence: format!("{name}#{k}"),
                    entrances: e0..self.local_entrances.len(),
                    exits: x0..self.local_exits.len(),
                });
                let tag = |v: &[usize]| v.iter().map(|&s| (c, s)).collect();
                Ends {
                    ri: tag(leaf.right_entrances()),
                    li: tag(leaf.left_entrances()),
                    ro: tag(leaf.right_exits()),
                    lo: tag(leaf.left_exits()),
                }
            }
            Node::Seq(a, b) => {
                let x = self.visit(a);
                let y = self.visit(b);
                for (&o, &i) in x.ro.iter().zip(&y.ri) {
                    self.wires.push((o, i));
                }
                for (&o, &i) in y.lo.iter().zip(&x.li) {
                    self.wires.push((o, i));
                }
                Ends { ri: x.ri, li: y.li, ro: y.ro, lo: x.lo }
            }
            Node::Sum(a, b) => {
                let mut x = self.visit(a);
                let y = self.visit(b);
                x.ri.extend(y.ri);
                x.li.extend(y.li);
                x.ro.extend(y.ro);
                x.lo.extend(y.lo);
                x
            }
        }
    }
}

impl ComponentIndex {
    /// Indexes a diagram whose arities have been validated.
    pub fn new(d: &StringDiagram) -> Self {
        let mut b = Builder {
            diagram: d,
            components: Vec::new(),
            counters: HashMap::new(),
            local_entrances: Vec::new(),
            local_exits: Vec::new(),
            wires: Vec::new(),
        };
        let ends = b.visit(d.root());
        let entrance_id: HashMap<End, usize> = b.local_entrances.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let exit_id: HashMap<End, usize> = b.local_exits.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let mut wiring = vec![None; b.local_exits.len()];
        for (o, i) in &b.wires {
            wiring[exit_id[o]] = Some(entrance_id[i]);
        }
        let global_entrances: Vec<usize> = ends.ri.iter().chain(&ends.li).map(|e| entrance_id[e]).collect();
        let global_exits: Vec<usize> = ends.ro.iter().chain(&ends.lo).map(|e| exit_id[e]).collect();
        let mut global_exit_pos = vec![None; b.local_exits.len()];
        for (p, &o) in global_exits.iter().enumerate() {
            global_exit_pos[o] = Some(p);
        }
        let mut seen = HashSet::new();
        let leaves = b.components.iter().filter(|c| seen.insert(c.leaf.clone())).map(|c| c.leaf.clone()).collect();
        let topo_order = (0..b.components.len()).rev().collect();
        Self {
            components: b.components,
            leaves,
            local_entrances: b.local_entrances,
            local_exits: b.local_exits,
            global_entrances,
            global_exits,
            wiring,
            topo_order,
            global_exit_pos,
        }
    }

    pub fn num_wired(&self) -> usize {
        self.wiring.iter().filter(|w| w.is_some()).count()
    }

    /// Flattened state name of a local entrance.
    pub fn entrance_name(&self, d: &StringDiagram, id: usize) -> String {
        let (c, s) = self.local_entrances[id];
        let comp = &self.components[c];
        format!("{}/{}", comp.occurrence, d.leaf(&comp.leaf).mdp().state_name(s))
    }

    /// Flattened state name of a local exit.
    pub fn exit_name(&self, d: &StringDiagram, id: usize) -> String {
        let (c, s) = self.local_exits[id];
        let comp = &self.components[c];
        format!("{}/{}", comp.occurrence, d.leaf(&comp.leaf).mdp().state_name(s))
    }

    pub fn global_entrance_names(&self, d: &StringDiagram) -> Vec<String> {
        self.global_entrances.iter().map(|&i| self.entrance_name(d, i)).collect()
    }

    pub fn global_exit_names(&self, d: &StringDiagram) -> Vec<String> {
        self.global_exits.iter().map(|&o| self.exit_name(d, o)).collect()
    }

    /// Builds the flattened open MDP directly from the wiring.
    pub fn flatten(&self, d: &StringDiagram) -> Result<OpenMdp> {
        let parts: Vec<Part<'_>> = self
            .components
            .iter()
            .map(|c| Part { open: d.leaf(&c.leaf).as_ref(), prefix: format!("{}/", c.occurrence) })
            .collect();
        let mut redirect = HashMap::new();
        for (o, w) in self.wiring.iter().enumerate() {
            if let Some(i) = w {
                redirect.insert(self.local_exits[o], self.local_entrances[*i]);
            }
        }
        let arity = d.arity()?;
        let ge: Vec<End> = self.global_entrances.iter().map(|&i| self.local_entrances[i]).collect();
        let gx: Vec<End> = self.global_exits.iter().map(|&o| self.local_exits[o]).collect();
        let io = IoSpec {
            ri: ge[..arity.m_right].to_vec(),
            li: ge[arity.m_right..].to_vec(),
            ro: gx[..arity.n_right].to_vec(),
            lo: gx[arity.n_right..].to_vec(),
        };
        assemble(&parts, &redirect, &io)
    }
}
