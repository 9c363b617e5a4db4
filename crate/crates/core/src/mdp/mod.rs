//! Flat MDPs in compressed sparse row form, plus the solvers that run on them.

mod linear;
mod policy;
mod solve;

use std::collections::HashMap;
use std::ops::Range;

use num_traits::{One, Signed, Zero};
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{float_to_ratio, format_rational, ratio_to_f64, Rational, Scalar, FLOAT_TOLERANCE};

pub use linear::SparseSystem;
pub use policy::{
    evaluate_scheduler, mc_reachability, mc_reachability_exact, policy_iteration, policy_iteration_exact, reach_matrix,
    PolicyResult,
};
pub use solve::{
    bellman_apply, extract_scheduler, ovi_solve, ovi_solve_with, value_iterate, verify_upper, OviOptions, OviResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NumericMode {
    Float64,
    ExactRational,
}

/// An MDP with named states and labelled actions.
///
/// States with no enabled action are sinks.
#[derive(Debug, Clone)]
pub struct Mdp {
    names: Vec<String>,
    index: HashMap<String, usize>,
    state_start: Vec<usize>,
    action_labels: Vec<String>,
    action_start: Vec<usize>,
    succ: Vec<u32>,
    probs: Vec<f64>,
    exact: Option<Vec<Rational>>,
}

impl Mdp {
    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_labels.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.succ.len()
    }

    pub fn numeric_mode(&self) -> NumericMode {
        if self.exact.is_some() {
            NumericMode::ExactRational
        } else {
            NumericMode::Float64
        }
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.names[s]
    }

    pub fn state_names(&self) -> &[String] {
        &self.names
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Global ids of the actions enabled at `s`.
    pub fn actions(&self, s: usize) -> Range<usize> {
        self.state_start[s]..self.state_start[s + 1]
    }

    pub fn action_label(&self, a: usize) -> &str {
        &self.action_labels[a]
    }

    /// Finds the enabled action of `s` with the given label.
    pub fn action_by_label(&self, s: usize, label: &str) -> Option<usize> {
        self.actions(s).find(|&a| self.action_labels[a] == label)
    }

    pub fn is_sink(&self, s: usize) -> bool {
        self.state_start[s] == self.state_start[s + 1]
    }

    pub fn successors(&self, a: usize) -> &[u32] {
        &self.succ[self.action_start[a]..self.action_start[a + 1]]
    }

    pub fn probs(&self, a: usize) -> &[f64] {
        &self.probs[self.action_start[a]..self.action_start[a + 1]]
    }

    pub fn exact_probs(&self, a: usize) -> Option<&[Rational]> {
        self.exact.as_ref().map(|e| &e[self.action_start[a]..self.action_start[a + 1]])
    }

    /// `(successor, probability)` pairs of action `a`.
    pub fn transitions(&self, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.successors(a).iter().map(|&t| t as usize).zip(self.probs(a).iter().copied())
    }

    /// Probabilities of action `a` in the requested scalar type, exact when available.
    pub fn scalar_probs<T: Scalar>(&self, a: usize) -> Vec<T> {
        let range = self.action_start[a]..self.action_start[a + 1];
        match &self.exact {
            Some(e) => range.map(|k| T::from_parts(Some(&e[k]), self.probs[k])).collect(),
            None => range.map(|k| T::from_f64(self.probs[k])).collect(),
        }
    }

    /// Expected value of `f` under action `a`.
    pub fn expect(&self, a: usize, f: &[f64]) -> f64 {
        let lo = self.action_start[a];
        let hi = self.action_start[a + 1];
        let mut acc = 0.0;
        for k in lo..hi {
            acc += self.probs[k] * f[self.succ[k] as usize];
        }
        acc
    }

    /// Expected value of `f` under action `a` in exact arithmetic.
    pub fn expect_exact(&self, a: usize, f: &[Rational]) -> Rational {
        let lo = self.action_start[a];
        let hi = self.action_start[a + 1];
        let mut acc = Rational::zero();
        for k in lo..hi {
            let p = match &self.exact {
                Some(e) => e[k].clone(),
                None => float_to_ratio(self.probs[k]),
            };
            acc += p * &f[self.succ[k] as usize];
        }
        acc
    }

    /// Strongly connected components of the full transition graph, sinks first.
    pub fn scc_order(&self) -> Vec<Vec<usize>> {
        self.scc_order_filtered(|_| true)
    }

    /// SCCs of the graph restricted to the actions accepted by `keep`, sinks first.
    pub fn scc_order_filtered(&self, keep: impl Fn(usize) -> bool) -> Vec<Vec<usize>> {
        let n = self.num_states();
        let mut graph: DiGraph<(), ()> = DiGraph::with_capacity(n, self.succ.len());
        for _ in 0..n {
            graph.add_node(());
        }
        for s in 0..n {
            for a in self.actions(s) {
                if !keep(a) {
                    continue;
                }
                for &t in self.successors(a) {
                    graph.add_edge(NodeIndex::new(s), NodeIndex::new(t as usize), ());
                }
            }
        }
        petgraph::algo::tarjan_scc(&graph).into_iter().map(|c| c.into_iter().map(|v| v.index()).collect()).collect()
    }

    /// States that reach `goal` with positive probability using actions accepted by `keep`.
    pub fn backward_reachable(&self, goal: &[bool], keep: impl Fn(usize) -> bool) -> Vec<bool> {
        let n = self.num_states();
        let mut preds: Vec<Vec<u32>> = vec![Vec::new(); n];
        for s in 0..n {
            for a in self.actions(s) {
                if keep(a) {
                    for &t in self.successors(a) {
                        preds[t as usize].push(s as u32);
                    }
                }
            }
        }
        let mut seen = goal.to_vec();
        let mut stack: Vec<usize> = (0..n).filter(|&s| goal[s]).collect();
        while let Some(t) = stack.pop() {
            for &p in &preds[t] {
                if !seen[p as usize] {
                    seen[p as usize] = true;
                    stack.push(p as usize);
                }
            }
        }
        seen
    }

    /// Human readable listing used in debug output and tests.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for s in 0..self.num_states() {
            for a in self.actions(s) {
                let dist: Vec<String> = match self.exact_probs(a) {
                    Some(e) => self
                        .successors(a)
                        .iter()
                        .zip(e)
                        .map(|(&t, p)| format!("{}:{}", self.names[t as usize], format_rational(p)))
                        .collect(),
                    None => self.transitions(a).map(|(t, p)| format!("{}:{}", self.names[t], p)).collect(),
                };
                out.push_str(&format!("{} -{}-> {}\n", self.names[s], self.action_labels[a], dist.join(" ")));
            }
        }
        out
    }
}

/// Incremental constructor for [`Mdp`] that validates distributions on build.
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    mode: NumericMode,
    names: Vec<String>,
    index: HashMap<String, usize>,
    actions: Vec<Vec<(String, Vec<(usize, Rational)>)>>,
}

impl MdpBuilder {
    pub fn new(mode: NumericMode) -> Self {
        Self { mode, names: Vec::new(), index: HashMap::new(), actions: Vec::new() }
    }

    pub fn exact() -> Self {
        Self::new(NumericMode::ExactRational)
    }

    /// Adds a state, or returns the index of an existing state with that name.
    pub fn state(&mut self, name: impl Into<String>) -> usize {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(name.clone(), i);
        self.names.push(name);
        self.actions.push(Vec::new());
        i
    }

    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Adds an action with an exact distribution.
    pub fn action(&mut self, state: usize, label: impl Into<String>, dist: Vec<(usize, Rational)>) -> &mut Self {
        self.actions[state].push((label.into(), dist));
        self
    }

    /// Adds an action with a float distribution (converted exactly).
    pub fn action_f64(&mut self, state: usize, label: impl Into<String>, dist: &[(usize, f64)]) -> &mut Self {
        let dist = dist.iter().map(|&(t, p)| (t, float_to_ratio(p))).collect();
        self.action(state, label, dist)
    }

    pub fn build(self) -> Result<Mdp> {
        let n = self.names.len();
        let mut state_start = Vec::with_capacity(n + 1);
        let mut action_labels = Vec::new();
        let mut action_start = vec![0];
        let mut succ = Vec::new();
        let mut probs = Vec::new();
        let mut exact = Vec::new();
        state_start.push(0);
        for (s, acts) in self.actions.into_iter().enumerate() {
            let mut labels_seen: Vec<&str> = Vec::new();
            for (label, dist) in &acts {
                if labels_seen.contains(&label.as_str()) {
                    return Err(Error::Model {
                        path: self.names[s].clone(),
                        message: format!("duplicate action label {label:?}"),
                    });
                }
                labels_seen.push(label);
                let mut merged: Vec<(usize, Rational)> = Vec::with_capacity(dist.len());
                for (t, p) in dist {
                    if *t >= n {
                        return Err(Error::Model {
                            path: self.names[s].clone(),
                            message: format!("action {label:?} targets unknown state index {t}"),
                        });
                    }
                    if p.is_negative() || *p > Rational::one() {
                        return Err(Error::Model {
                            path: self.names[s].clone(),
                            message: format!("action {label:?} has probability {} outside [0,1]", format_rational(p)),
                        });
                    }
                    if p.is_zero() {
                        continue;
                    }
                    match merged.iter_mut().find(|(u, _)| u == t) {
                        Some((_, q)) => *q += p,
                        None => merged.push((*t, p.clone())),
                    }
                }
                merged.sort_by_key(|(t, _)| *t);
                let sum: Rational = merged.iter().map(|(_, p)| p.clone()).sum();
                let ok = match self.mode {
                    NumericMode::ExactRational => sum.is_one(),
                    NumericMode::Float64 => {
                        let fsum: f64 = merged.iter().map(|(_, p)| ratio_to_f64(p)).sum();
                        (fsum - 1.0).abs() <= FLOAT_TOLERANCE
                    }
                };
                if !ok {
                    return Err(Error::Distribution {
                        state: self.names[s].clone(),
                        action: label.clone(),
                        sum: format_rational(&sum),
                    });
                }
                for (t, p) in merged {
                    succ.push(t as u32);
                    probs.push(ratio_to_f64(&p));
                    exact.push(p);
                }
                action_labels.push(label.clone());
                action_start.push(succ.len());
            }
            state_start.push(action_labels.len());
        }
        Ok(Mdp {
            names: self.names,
            index: self.index,
            state_start,
            action_labels,
            action_start,
            succ,
            probs,
            exact: match self.mode {
                NumericMode::ExactRational => Some(exact),
                NumericMode::Float64 => None,
            },
        })
    }
}

/// Target states with a weight in `[0,1]` each.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetWeight {
    targets: Vec<usize>,
    weights: Vec<f64>,
    exact: Option<Vec<Rational>>,
}

impl TargetWeight {
    pub fn new(mdp: &Mdp, targets: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        Self::check(mdp, &targets, weights.len())?;
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::Target(format!("weight {w} outside [0,1]")));
        }
        Ok(Self { targets, weights, exact: None })
    }

    /// Exact weights; the float view is the nearest float of each entry.
    pub fn exact(mdp: &Mdp, targets: Vec<usize>, weights: Vec<Rational>) -> Result<Self> {
        Self::check(mdp, &targets, weights.len())?;
        if weights.iter().any(|w| w.is_negative() || *w > Rational::one()) {
            return Err(Error::Target("weight outside [0,1]".into()));
        }
        Ok(Self { targets, weights: weights.iter().map(ratio_to_f64).collect(), exact: Some(weights) })
    }

    /// A single target with weight one.
    pub fn unit(mdp: &Mdp, target: usize) -> Result<Self> {
        Self::exact(mdp, vec![target], vec![Rational::one()])
    }

    fn check(mdp: &Mdp, targets: &[usize], n_weights: usize) -> Result<()> {
        if targets.len() != n_weights {
            return Err(Error::Dimension { expected: targets.len(), got: n_weights });
        }
        let mut seen = vec![false; mdp.num_states()];
        for &t in targets {
            if t >= mdp.num_states() {
                return Err(Error::Target(format!("unknown state index {t}")));
            }
            if seen[t] {
                return Err(Error::Target(format!("duplicate target {:?}", mdp.state_name(t))));
            }
            seen[t] = true;
            if !mdp.is_sink(t) {
                return Err(Error::Target(format!("target {:?} is not a sink", mdp.state_name(t))));
            }
        }
        Ok(())
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exact_weights(&self) -> Option<&[Rational]> {
        self.exact.as_deref()
    }

    pub fn scalar_weights<T: Scalar>(&self) -> Vec<T> {
        match &self.exact {
            Some(e) => e.iter().zip(&self.weights).map(|(q, &w)| T::from_parts(Some(q), w)).collect(),
            None => self.weights.iter().map(|&w| T::from_f64(w)).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    /// Per-state fixed value: `Some(w_t)` at targets, `None` elsewhere.
    pub(crate) fn dense<T: Scalar>(&self, n: usize) -> Vec<Option<T>> {
        let mut out = vec![None; n];
        for (&t, w) in self.targets.iter().zip(self.scalar_weights::<T>()) {
            out[t] = Some(w);
        }
        out
    }
}

/// A value in `[0,1]` per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueVector(pub Vec<f64>);

impl ValueVector {
    /// The least element.
    pub fn bottom(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn top(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn le(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn max_diff(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for ValueVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Deterministic memoryless scheduler: a global action id per non-sink state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DmScheduler {
    pub choice: Vec<Option<u32>>,
}

impl DmScheduler {
    /// Picks the first enabled action everywhere.
    pub fn first(mdp: &Mdp) -> Self {
        let choice = (0..mdp.num_states())
            .map(|s| if mdp.is_sink(s) { None } else { Some(mdp.actions(s).start as u32) })
            .collect();
        Self { choice }
    }

    /// Builds a scheduler from action labels; states missing from `labels` use their first action.
    pub fn from_labels(mdp: &Mdp, labels: &[(&str, &str)]) -> Result<Self> {
        let mut sched = Self::first(mdp);
        for (state, label) in labels {
            let s = mdp
                .state_index(state)
                .ok_or_else(|| Error::Model { path: state.to_string(), message: "unknown state".into() })?;
            let a = mdp.action_by_label(s, label).ok_or_else(|| Error::Model {
                path: state.to_string(),
                message: format!("no action labelled {label:?}"),
            })?;
            sched.choice[s] = Some(a as u32);
        }
        Ok(sched)
    }

    pub fn action(&self, s: usize) -> Option<usize> {
        self.choice[s].map(|a| a as usize)
    }

    /// Checks that every non-sink state has an enabled action chosen.
    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        if self.choice.len() != mdp.num_states() {
            return Err(Error::Dimension { expected: mdp.num_states(), got: self.choice.len() });
        }
        for s in 0..mdp.num_states() {
            match self.action(s) {
                Some(a) if mdp.actions(s).contains(&a) => {}
                None if mdp.is_sink(s) => {}
                _ => {
                    return Err(Error::Model {
                        path: mdp.state_name(s).to_string(),
                        message: "scheduler choice is not an enabled action".into(),
                    })
                }
            }
        }
        Ok(())
    }

    /// Enumerates every DM scheduler of `mdp`, or `None` when there are more than `limit`.
    pub fn enumerate(mdp: &Mdp, limit: usize) -> Option<Vec<DmScheduler>> {
        let mut count: usize = 1;
        for s in 0..mdp.num_states() {
            count = count.checked_mul(mdp.actions(s).len().max(1))?;
            if count > limit {
                return None;
            }
        }
        let mut out = Vec::with_capacity(count);
        let mut current = Self::first(mdp);
        loop {
            out.push(current.clone());
            // Odometer increment over the non-sink states.
            let mut s = 0;
            loop {
                if s == mdp.num_states() {
                    return Some(out);
                }
                if let Some(a) = current.choice[s] {
                    let next = a as usize + 1;
                    if next < mdp.actions(s).end {
                        current.choice[s] = Some(next as u32);
                        break;
                    }
                    current.choice[s] = Some(mdp.actions(s).start as u32);
                }
                s += 1;
            }
        }
    }
}
