use std::collections::HashMap;
use std::sync::Arc;

use crate::diagram::{ComponentIndex, OpenMdp, StringDiagram};
use crate::error::{Error, Result};
use crate::mdp::{ovi_solve, reach_matrix, DmScheduler, SparseSystem, TargetWeight};
use crate::numeric::{dot, float_to_ratio, ratio_to_f64_up, Rational};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use super::UPPER_MARGIN;

type Matrix = Arc<Vec<Vec<Rational>>>;

const MEMO_LIMIT: usize = 512;

/// Leaves with more states than this are never eliminated exactly; Park
/// checks bound them with [`ExactLocal::certified_upper`] instead.
pub const EXACT_STATE_LIMIT: usize = 2_000;

/// Certified uppers are rounded up onto multiples of `2^-UPPER_GRID_BITS`.
const UPPER_GRID_BITS: usize = 40;

/// Exact weighted-reachability solver for leaves, reused across calls.
///
/// Keeps the last optimal scheduler per leaf as a warm start, and memoizes the
/// exact state-to-exit reachability matrix of every scheduler it evaluates, so
/// re-solving a leaf for new exit weights is a matrix-vector product whenever
/// the optimal scheduler has been seen before.
#[derive(Debug, Default)]
pub struct ExactLocal {
    warm: HashMap<String, DmScheduler>,
    matrices: HashMap<(String, DmScheduler), Matrix>,
    pub evaluations: u64,
}

impl ExactLocal {
    pub fn new() -> Self {
        Self::default()
    }

    fn matrix(&mut self, name: &str, leaf: &OpenMdp, sched: &DmScheduler) -> Result<Matrix> {
        let key = (name.to_string(), sched.clone());
        if let Some(m) = self.matrices.get(&key) {
            return Ok(m.clone());
        }
        self.evaluations += 1;
        if self.matrices.len() >= MEMO_LIMIT {
            self.matrices.clear();
        }
        let m = Arc::new(reach_matrix::<Rational>(leaf.mdp(), sched, &leaf.exits())?);
        self.matrices.insert(key, m.clone());
        Ok(m)
    }

    /// Optimal values at the leaf's entrances for exact exit weights.
    pub fn solve(&mut self, name: &str, leaf: &OpenMdp, w: &[Rational]) -> Result<Vec<Rational>> {
        Ok(self.solve_rows(name, leaf, w)?.0)
    }

    /// Like [`solve`](Self::solve), plus the exit-reachability row of every
    /// entrance under the optimal scheduler found.
    pub fn solve_rows(
        &mut self,
        name: &str,
        leaf: &OpenMdp,
        w: &[Rational],
    ) -> Result<(Vec<Rational>, Vec<Vec<Rational>>)> {
        let m = leaf.mdp();
        let exits = leaf.exits();
        if w.len() != exits.len() {
            return Err(Error::Dimension { expected: exits.len(), got: w.len() });
        }
        if w.iter().any(|x| x.is_negative() || *x > Rational::one()) {
            return Err(Error::Target("weight outside [0,1]".into()));
        }
        let mut sched = match self.warm.get(name) {
            Some(s) if s.choice.len() == m.num_states() => s.clone(),
            _ => {
                let tw = TargetWeight::exact(m, exits.clone(), w.to_vec())?;
                crate::mdp::ovi_solve(m, &tw, 1e-9)?.scheduler
            }
        };
        loop {
            let mat = self.matrix(name, leaf, &sched)?;
            let values: Vec<Rational> = mat.iter().map(|row| dot(row, w)).collect();
            let mut changed = false;
            for s in 0..m.num_states() {
                let Some(cur) = sched.action(s) else { continue };
                let mut best = m.expect_exact(cur, &values);
                for a in m.actions(s) {
                    if a == cur {
                        continue;
                    }
                    let v = m.expect_exact(a, &values);
                    if v > best {
                        best = v;
                        sched.choice[s] = Some(a as u32);
                        changed = true;
                    }
                }
            }
            if !changed {
                self.warm.insert(name.to_string(), sched);
                let ents = leaf.entrances();
                return Ok((
                    ents.iter().map(|&i| values[i].clone()).collect(),
                    ents.iter().map(|&i| mat[i].clone()).collect(),
                ));
            }
        }
    }

    /// An upper bound on the leaf's optimal values at its entrances, without
    /// exact elimination. The float upper of an `eta`-precise OVI run is
    /// rounded up onto a dyadic grid and accepted only if it passes the Park
    /// check `Φ(U) ≤ U` in exact arithmetic; `None` when it does not.
    pub fn certified_upper(&mut self, leaf: &OpenMdp, w: &[Rational], eta: f64) -> Result<Option<Vec<Rational>>> {
        let m = leaf.mdp();
        let exits = leaf.exits();
        if w.len() != exits.len() {
            return Err(Error::Dimension { expected: exits.len(), got: w.len() });
        }
        let tw = TargetWeight::new(m, exits.clone(), w.iter().map(ratio_to_f64_up).collect())?;
        let res = ovi_solve(m, &tw, eta)?;
        if !res.converged {
            return Ok(None);
        }
        let grid = Rational::from_integer(BigInt::one() << UPPER_GRID_BITS);
        let mut u: Vec<Rational> =
            res.upper.0.iter().map(|&x| (float_to_ratio((x + UPPER_MARGIN).min(1.0)) * &grid).ceil() / &grid).collect();
        let mut pinned = vec![false; m.num_states()];
        for (&t, x) in exits.iter().zip(w) {
            u[t] = x.clone();
            pinned[t] = true;
        }
        for s in (0..m.num_states()).filter(|&s| !pinned[s]) {
            if m.actions(s).any(|a| m.expect_exact(a, &u) > u[s]) {
                return Ok(None);
            }
        }
        Ok(Some(leaf.entrances().iter().map(|&i| u[i].clone()).collect()))
    }
}

/// Exit weights of one component derived from values on local entrances.
pub(crate) fn component_weights<T: Clone>(idx: &ComponentIndex, comp: usize, entrance_values: &[T], w: &[T]) -> Vec<T> {
    idx.components[comp]
        .exits
        .clone()
        .map(|o| match idx.wiring[o] {
            Some(i) => entrance_values[i].clone(),
            None => w[idx.global_exit_pos[o].expect("unwired exits are global")].clone(),
        })
        .collect()
}

/// One application of the shortcut Bellman operator.
///
/// For each component, the exits are weighted by the candidate value of the
/// entrance they are wired to (or by the global weight), and the result at each
/// local entrance is the leaf's exact optimal value for those weights.
pub fn shortcut_bellman_apply(
    d: &StringDiagram,
    idx: &ComponentIndex,
    candidate: &[Rational],
    w: &[Rational],
    solver: &mut ExactLocal,
) -> Result<Vec<Rational>> {
    if candidate.len() != idx.local_entrances.len() {
        return Err(Error::Dimension { expected: idx.local_entrances.len(), got: candidate.len() });
    }
    if w.len() != idx.global_exits.len() {
        return Err(Error::Dimension { expected: idx.global_exits.len(), got: w.len() });
    }
    let mut out = candidate.to_vec();
    for (c, comp) in idx.components.iter().enumerate() {
        if comp.entrances.is_empty() {
            continue;
        }
        let weights = component_weights(idx, c, candidate, w);
        let vals = solver.solve(&comp.leaf, d.leaf(&comp.leaf), &weights)?;
        for (id, v) in comp.entrances.clone().zip(vals) {
            out[id] = v;
        }
    }
    Ok(out)
}

/// Exact values at the local entrances when every component follows the
/// scheduler that is optimal for exit weights derived from `base`.
///
/// The composed schedulers are realizable, so the result never exceeds the
/// optimal value. Applied repeatedly it is policy iteration on the shortcut MDP.
pub fn policy_values(
    d: &StringDiagram,
    idx: &ComponentIndex,
    base: &[Rational],
    w: &[Rational],
    solver: &mut ExactLocal,
) -> Result<Vec<Rational>> {
    let n = idx.local_entrances.len();
    let mut edges: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); n];
    let mut rhs = vec![Rational::zero(); n];
    for (c, comp) in idx.components.iter().enumerate() {
        if comp.entrances.is_empty() {
            continue;
        }
        let weights = component_weights(idx, c, base, w);
        let (_, rows) = solver.solve_rows(&comp.leaf, d.leaf(&comp.leaf), &weights)?;
        for (i, row) in comp.entrances.clone().zip(rows) {
            for (o, p) in comp.exits.clone().zip(row) {
                if p.is_zero() {
                    continue;
                }
                match idx.wiring[o] {
                    Some(j) => edges[i].push((j, p)),
                    None => rhs[i] += p * &w[idx.global_exit_pos[o].expect("unwired exits are global")],
                }
            }
        }
    }
    // Entrances that cannot reach positive weight have value zero and stay out of the system.
    let mut live: Vec<bool> = rhs.iter().map(|r| r.is_positive()).collect();
    loop {
        let mut grew = false;
        for i in 0..n {
            if !live[i] && edges[i].iter().any(|(j, _)| live[*j]) {
                live[i] = true;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    let vars: Vec<usize> = (0..n).filter(|&i| live[i]).collect();
    let mut var_of = vec![usize::MAX; n];
    for (k, &i) in vars.iter().enumerate() {
        var_of[i] = k;
    }
    let mut sys = SparseSystem::<Rational>::new(vars.len(), 1);
    for (k, &i) in vars.iter().enumerate() {
        for (j, p) in &edges[i] {
            if live[*j] {
                sys.add_coef(k, var_of[*j], p.clone());
            }
        }
        sys.add_rhs(k, 0, rhs[i].clone());
    }
    let order: Vec<usize> = (0..vars.len()).collect();
    let sol = sys.solve(&order)?;
    Ok((0..n).map(|i| if live[i] { sol[var_of[i]][0].clone() } else { Rational::zero() }).collect())
}

/// Per local entrance, the longest path from its strongly connected component
/// to a sink component in the graph linking each entrance to the entrances
/// its component can reach through wired exits.
pub fn entrance_levels(d: &StringDiagram, idx: &ComponentIndex) -> Vec<usize> {
    use petgraph::graph::{DiGraph, NodeIndex};

    let mut reach_cache: HashMap<&str, Vec<Vec<bool>>> = HashMap::new();
    let mut graph: DiGraph<(), ()> = DiGraph::new();
    let nodes: Vec<NodeIndex> = (0..idx.local_entrances.len()).map(|_| graph.add_node(())).collect();
    for comp in &idx.components {
        let leaf = d.leaf(&comp.leaf);
        let reach = reach_cache.entry(comp.leaf.as_str()).or_insert_with(|| exits_reachable(leaf));
        for (e, i) in comp.entrances.clone().enumerate() {
            for (k, o) in comp.exits.clone().enumerate() {
                if let (true, Some(j)) = (reach[e][k], idx.wiring[o]) {
                    graph.add_edge(nodes[i], nodes[j], ());
                }
            }
        }
    }
    // Components come out sinks first.
    let sccs = petgraph::algo::tarjan_scc(&graph);
    let mut scc_of = vec![0; nodes.len()];
    for (c, members) in sccs.iter().enumerate() {
        for n in members {
            scc_of[n.index()] = c;
        }
    }
    let mut level = vec![0usize; sccs.len()];
    for (c, members) in sccs.iter().enumerate() {
        let mut best = 0;
        for n in members {
            for t in graph.neighbors(*n) {
                let tc = scc_of[t.index()];
                if tc != c {
                    best = best.max(level[tc] + 1);
                }
            }
        }
        level[c] = best;
    }
    scc_of.iter().map(|&c| level[c]).collect()
}

/// `out[e][k]`: exit `k` is reachable from entrance `e` under some scheduler.
fn exits_reachable(leaf: &OpenMdp) -> Vec<Vec<bool>> {
    let m = leaf.mdp();
    let exits = leaf.exits();
    leaf.entrances()
        .into_iter()
        .map(|start| {
            let mut seen = vec![false; m.num_states()];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(s) = stack.pop() {
                for a in m.actions(s) {
                    for &t in m.successors(a) {
                        let t = t as usize;
                        if !seen[t] {
                            seen[t] = true;
                            stack.push(t);
                        }
                    }
                }
            }
            exits.iter().map(|&x| seen[x]).collect()
        })
        .collect()
}
