use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Mdp, MdpBuilder, NumericMode};
use crate::numeric::{float_to_ratio, Rational};

/// `(m_right, m_left) -> (n_right, n_left)`: counts of right entrances and left
/// exits on the left boundary, right exits and left entrances on the right one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arity {
    pub m_right: usize,
    pub m_left: usize,
    pub n_right: usize,
    pub n_left: usize,
}

impl Arity {
    pub fn new(m_right: usize, m_left: usize, n_right: usize, n_left: usize) -> Self {
        Self { m_right, m_left, n_right, n_left }
    }

    /// Arity of a sequential composition, if the middle interfaces agree.
    pub fn seq(self, right: Arity) -> Option<Arity> {
        (self.n_right == right.m_right && self.n_left == right.m_left).then_some(Arity::new(
            self.m_right,
            self.m_left,
            right.n_right,
            right.n_left,
        ))
    }

    pub fn sum(self, other: Arity) -> Arity {
        Arity::new(
            self.m_right + other.m_right,
            self.m_left + other.m_left,
            self.n_right + other.n_right,
            self.n_left + other.n_left,
        )
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})->({},{})", self.m_right, self.m_left, self.n_right, self.n_left)
    }
}

/// An MDP with four ordered lists of open ends.
///
/// Right entrances and left exits sit on the left boundary, right exits and
/// left entrances on the right boundary. Exits are sinks.
#[derive(Debug, Clone)]
pub struct OpenMdp {
    mdp: Mdp,
    right_entrances: Vec<usize>,
    left_entrances: Vec<usize>,
    right_exits: Vec<usize>,
    left_exits: Vec<usize>,
}

impl OpenMdp {
    pub fn new(
        mdp: Mdp,
        right_entrances: Vec<usize>,
        left_entrances: Vec<usize>,
        right_exits: Vec<usize>,
        left_exits: Vec<usize>,
    ) -> Result<Self> {
        let mut role = vec![None; mdp.num_states()];
        let lists = [
            ("right entrance", &right_entrances),
            ("left entrance", &left_entrances),
            ("right exit", &right_exits),
            ("left exit", &left_exits),
        ];
        for (kind, list) in lists {
            for &s in list {
                if s >= mdp.num_states() {
                    return Err(Error::Model { path: kind.into(), message: format!("unknown state index {s}") });
                }
                if let Some(prev) = role[s] {
                    return Err(Error::Model {
                        path: mdp.state_name(s).into(),
                        message: format!("state is both a {prev} and a {kind}"),
                    });
                }
                role[s] = Some(kind);
            }
        }
        for &s in right_exits.iter().chain(&left_exits) {
            if !mdp.is_sink(s) {
                return Err(Error::Model {
                    path: mdp.state_name(s).into(),
                    message: "exit has enabled actions".into(),
                });
            }
        }
        Ok(Self { mdp, right_entrances, left_entrances, right_exits, left_exits })
    }

    /// Builds an open MDP from state names.
    pub fn from_names(mdp: Mdp, ri: &[&str], li: &[&str], ro: &[&str], lo: &[&str]) -> Result<Self> {
        let look = |names: &[&str]| -> Result<Vec<usize>> {
            names
                .iter()
                .map(|n| {
                    mdp.state_index(n)
                        .ok_or_else(|| Error::Model { path: n.to_string(), message: "unknown open end".into() })
                })
                .collect()
        };
        let (ri, li, ro, lo) = (look(ri)?, look(li)?, look(ro)?, look(lo)?);
        Self::new(mdp, ri, li, ro, lo)
    }

    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn right_entrances(&self) -> &[usize] {
        &self.right_entrances
    }

    pub fn left_entrances(&self) -> &[usize] {
        &self.left_entrances
    }

    pub fn right_exits(&self) -> &[usize] {
        &self.right_exits
    }

    pub fn left_exits(&self) -> &[usize] {
        &self.left_exits
    }

    /// Right entrances followed by left entrances.
    pub fn entrances(&self) -> Vec<usize> {
        self.right_entrances.iter().chain(&self.left_entrances).copied().collect()
    }

    /// Right exits followed by left exits.
    pub fn exits(&self) -> Vec<usize> {
        self.right_exits.iter().chain(&self.left_exits).copied().collect()
    }

    pub fn arity(&self) -> Arity {
        Arity::new(self.right_entrances.len(), self.left_exits.len(), self.right_exits.len(), self.left_entrances.len())
    }

    pub fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    /// Copy with every state name prefixed by `prefix`.
    pub fn renamed(&self, prefix: &str) -> OpenMdp {
        let parts = [Part { open: self, prefix: prefix.to_string() }];
        assemble(&parts, &HashMap::new(), &IoSpec::of(0, self)).expect("renaming preserves validity")
    }
}

/// One operand of an assembly together with the prefix for its state names.
pub(crate) struct Part<'a> {
    pub open: &'a OpenMdp,
    pub prefix: String,
}

/// Open ends of an assembled oMDP as `(part, state)` pairs.
pub(crate) struct IoSpec {
    pub ri: Vec<(usize, usize)>,
    pub li: Vec<(usize, usize)>,
    pub ro: Vec<(usize, usize)>,
    pub lo: Vec<(usize, usize)>,
}

impl IoSpec {
    pub fn of(part: usize, open: &OpenMdp) -> Self {
        let tag = |v: &[usize]| v.iter().map(|&s| (part, s)).collect();
        Self {
            ri: tag(&open.right_entrances),
            li: tag(&open.left_entrances),
            ro: tag(&open.right_exits),
            lo: tag(&open.left_exits),
        }
    }
}

/// Disjoint union of `parts` where each exit in `redirect` is removed and
/// transitions into it go to its partner entrance instead.
pub(crate) fn assemble(
    parts: &[Part<'_>],
    redirect: &HashMap<(usize, usize), (usize, usize)>,
    io: &IoSpec,
) -> Result<OpenMdp> {
    let exact = parts.iter().all(|p| p.open.mdp.numeric_mode() == NumericMode::ExactRational);
    let mut builder = MdpBuilder::new(if exact { NumericMode::ExactRational } else { NumericMode::Float64 });
    let mut ids: Vec<Vec<usize>> = Vec::with_capacity(parts.len());
    for (p, part) in parts.iter().enumerate() {
        let m = &part.open.mdp;
        let mut local = vec![usize::MAX; m.num_states()];
        for (s, slot) in local.iter_mut().enumerate() {
            if redirect.contains_key(&(p, s)) {
                continue;
            }
            let name = format!("{}{}", part.prefix, m.state_name(s));
            if builder.lookup(&name).is_some() {
                return Err(Error::Model { path: name, message: "duplicate state name after composition".into() });
            }
            *slot = builder.state(name);
        }
        ids.push(local);
    }
    let resolve = |p: usize, s: usize| -> usize {
        match redirect.get(&(p, s)) {
            Some(&(q, t)) => ids[q][t],
            None => ids[p][s],
        }
    };
    for (p, part) in parts.iter().enumerate() {
        let m = &part.open.mdp;
        for s in 0..m.num_states() {
            if ids[p][s] == usize::MAX {
                continue;
            }
            for a in m.actions(s) {
                let dist: Vec<(usize, Rational)> = match m.exact_probs(a) {
                    Some(e) => {
                        m.successors(a).iter().zip(e).map(|(&t, q)| (resolve(p, t as usize), q.clone())).collect()
                    }
                    None => m.transitions(a).map(|(t, q)| (resolve(p, t), float_to_ratio(q))).collect(),
                };
                builder.action(ids[p][s], m.action_label(a), dist);
            }
        }
    }
    let mdp = builder.build()?;
    let map = |v: &[(usize, usize)]| -> Vec<usize> { v.iter().map(|&(p, s)| resolve(p, s)).collect() };
    OpenMdp::new(mdp, map(&io.ri), map(&io.li), map(&io.ro), map(&io.lo))
}

fn names_clash(a: &OpenMdp, b: &OpenMdp) -> bool {
    a.mdp.state_names().iter().any(|n| b.mdp.state_index(n).is_some())
}

fn operand_prefixes(a: &OpenMdp, b: &OpenMdp) -> (String, String) {
    if names_clash(a, b) {
        ("l/".into(), "r/".into())
    } else {
        (String::new(), String::new())
    }
}

/// Sequential composition: `a`'s right exits feed `b`'s right entrances and
/// `b`'s left exits feed `a`'s left entrances.
///
/// State names are kept when they are disjoint; otherwise they are prefixed
/// with `l/` and `r/`.
pub fn seq_compose(a: &OpenMdp, b: &OpenMdp) -> Result<OpenMdp> {
    if a.arity().seq(b.arity()).is_none() {
        return Err(Error::Arity(vec![super::ArityError { path: "$".into(), left: a.arity(), right: b.arity() }]));
    }
    let (pa, pb) = operand_prefixes(a, b);
    let parts = [Part { open: a, prefix: pa }, Part { open: b, prefix: pb }];
    let mut redirect = HashMap::new();
    for (&o, &i) in a.right_exits.iter().zip(&b.right_entrances) {
        redirect.insert((0, o), (1, i));
    }
    for (&o, &i) in b.left_exits.iter().zip(&a.left_entrances) {
        redirect.insert((1, o), (0, i));
    }
    let io = IoSpec {
        ri: a.right_entrances.iter().map(|&s| (0, s)).collect(),
        li: b.left_entrances.iter().map(|&s| (1, s)).collect(),
        ro: b.right_exits.iter().map(|&s| (1, s)).collect(),
        lo: a.left_exits.iter().map(|&s| (0, s)).collect(),
    };
    assemble(&parts, &redirect, &io)
}

/// Sum: disjoint union with open ends concatenated, `a`'s first.
pub fn sum_compose(a: &OpenMdp, b: &OpenMdp) -> Result<OpenMdp> {
    let (pa, pb) = operand_prefixes(a, b);
    let parts = [Part { open: a, prefix: pa }, Part { open: b, prefix: pb }];
    let (ia, ib) = (IoSpec::of(0, a), IoSpec::of(1, b));
    let cat = |x: &[(usize, usize)], y: &[(usize, usize)]| x.iter().chain(y).copied().collect::<Vec<_>>();
    let io =
        IoSpec { ri: cat(&ia.ri, &ib.ri), li: cat(&ia.li, &ib.li), ro: cat(&ia.ro, &ib.ro), lo: cat(&ia.lo, &ib.lo) };
    assemble(&parts, &HashMap::new(), &io)
}
