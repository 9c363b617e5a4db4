//! Random diagram generation and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cvi::diagram::{ComponentIndex, Node, OpenMdp, StringDiagram};
use cvi::mdp::{DmScheduler, Mdp, MdpBuilder};
use cvi::numeric::{ratio, Rational};

/// Open-end counts of a leaf or subdiagram: `(ri, li, ro, lo)`.
pub type Ends = (usize, usize, usize, usize);

#[derive(Debug, Clone)]
pub struct LeafShape {
    /// Upper bound on internal (non-open) states.
    pub internal: usize,
    /// Upper bound on actions per non-open state.
    pub actions: usize,
    /// Upper bound on successors per action.
    pub fanout: usize,
    /// Entrances get a single action when set.
    pub plain_entrances: bool,
    /// Chance that an internal state has no action at all.
    pub dead: f64,
}

impl Default for LeafShape {
    fn default() -> Self {
        Self { internal: 8, actions: 3, fanout: 3, plain_entrances: false, dead: 0.1 }
    }
}

/// A random exact oMDP with the given open ends; at most 20 states in total.
pub fn random_leaf(rng: &mut ChaCha8Rng, ends: Ends, shape: &LeafShape) -> OpenMdp {
    let (ri, li, ro, lo) = ends;
    let room = 20usize.saturating_sub(ri + li + ro + lo).max(1);
    let internal = rng.gen_range(1..=shape.internal.min(room));
    let mut b = MdpBuilder::exact();
    let ent: Vec<usize> = (0..ri + li).map(|j| b.state(format!("i{j}"))).collect();
    let inner: Vec<usize> = (0..internal).map(|j| b.state(format!("s{j}"))).collect();
    let exits: Vec<usize> = (0..ro + lo).map(|j| b.state(format!("o{j}"))).collect();
    let all: Vec<usize> = ent.iter().chain(&inner).chain(&exits).copied().collect();
    for &s in ent.iter().chain(&inner) {
        let is_entrance = s < ent.len();
        if !is_entrance && rng.gen_bool(shape.dead) {
            continue;
        }
        let n = if is_entrance && shape.plain_entrances { 1 } else { rng.gen_range(1..=shape.actions) };
        for a in 0..n {
            let k = rng.gen_range(1..=shape.fanout);
            let mut dist: BTreeMap<usize, i64> = BTreeMap::new();
            for _ in 0..k {
                *dist.entry(*all.choose(rng).unwrap()).or_default() += rng.gen_range(1..=4);
            }
            let total: i64 = dist.values().sum();
            b.action(s, format!("a{a}"), dist.into_iter().map(|(t, x)| (t, ratio(x, total))).collect());
        }
    }
    let mdp = b.build().unwrap();
    let (ri_s, li_s) = ent.split_at(ri);
    let (ro_s, lo_s) = exits.split_at(ro);
    OpenMdp::new(mdp, ri_s.to_vec(), li_s.to_vec(), ro_s.to_vec(), lo_s.to_vec()).unwrap()
}

fn leaf_ends(o: &OpenMdp) -> Ends {
    (o.right_entrances().len(), o.left_entrances().len(), o.right_exits().len(), o.left_exits().len())
}

/// Random diagrams with mixed sequential and sum composition.
pub struct DiagramGen {
    pub rng: ChaCha8Rng,
    pub max_components: usize,
    pub bidirectional: bool,
    pub shape: LeafShape,
    leaves: Vec<(String, OpenMdp)>,
}

impl DiagramGen {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            max_components: 4,
            bidirectional: true,
            shape: LeafShape::default(),
            leaves: Vec::new(),
        }
    }

    fn leaf(&mut self, ri: Option<usize>, lo: Option<usize>) -> Option<(Node, Ends)> {
        if lo.is_some_and(|x| x > 2) {
            return None;
        }
        if self.rng.gen_bool(0.3) {
            let fits: Vec<usize> = (0..self.leaves.len())
                .filter(|&j| {
                    let e = leaf_ends(&self.leaves[j].1);
                    ri.is_none_or(|r| r == e.0) && lo.is_none_or(|l| l == e.3)
                })
                .collect();
            if let Some(&j) = fits.choose(&mut self.rng) {
                let (name, o) = &self.leaves[j];
                return Some((Node::leaf(name.clone()), leaf_ends(o)));
            }
        }
        let bi = self.bidirectional;
        let ri = ri.unwrap_or_else(|| self.rng.gen_range(0..=2));
        let li = if bi { self.rng.gen_range(0..=1) } else { 0 };
        let lo = lo.unwrap_or_else(|| if bi { self.rng.gen_range(0..=1) } else { 0 });
        let ro = self.rng.gen_range(0..=2 - lo);
        let leaf = random_leaf(&mut self.rng, (ri, li, ro, lo), &self.shape);
        let name = format!("L{}", self.leaves.len());
        self.leaves.push((name.clone(), leaf));
        Some((Node::leaf(name), (ri, li, ro, lo)))
    }

    fn node(&mut self, k: usize, ri: Option<usize>, lo: Option<usize>) -> Option<(Node, Ends)> {
        if k == 1 {
            return self.leaf(ri, lo);
        }
        let k1 = self.rng.gen_range(1..k);
        if self.rng.gen_bool(0.6) {
            let (a, ea) = self.node(k1, ri, lo)?;
            let (b, eb) = self.node(k - k1, Some(ea.2), Some(ea.1))?;
            Some((Node::seq(a, b), (ea.0, eb.1, eb.2, ea.3)))
        } else {
            let r1 = ri.map(|r| self.rng.gen_range(0..=r));
            let l1 = lo.map(|l| self.rng.gen_range(0..=l));
            let (a, ea) = self.node(k1, r1, l1)?;
            let (b, eb) = self.node(k - k1, ri.zip(r1).map(|(r, x)| r - x), lo.zip(l1).map(|(l, x)| l - x))?;
            Some((Node::sum(a, b), (ea.0 + eb.0, ea.1 + eb.1, ea.2 + eb.2, ea.3 + eb.3)))
        }
    }

    /// A diagram with at least one global entrance and exit, plus weights on its global exits.
    pub fn diagram(&mut self) -> (StringDiagram, Vec<Rational>) {
        loop {
            self.leaves.clear();
            let k = self.rng.gen_range(1..=self.max_components);
            let ri = self.rng.gen_range(1..=2);
            let Some((root, ends)) = self.node(k, Some(ri), None) else { continue };
            if ends.2 + ends.3 == 0 {
                continue;
            }
            let used = root.leaf_occurrences().into_iter().map(str::to_string).collect::<Vec<_>>();
            let leaves: Vec<(String, OpenMdp)> =
                self.leaves.iter().filter(|(n, _)| used.contains(n)).cloned().collect();
            let d = StringDiagram::build(root, leaves).unwrap();
            let w: Vec<Rational> = (0..ends.2 + ends.3).map(|_| ratio(self.rng.gen_range(0..=4), 4)).collect();
            return (d, w);
        }
    }
}

/// Dense exact solve of `A x = b`; `None` if singular.
pub fn gauss(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = &a[r][col] / &a[col][col];
                for c in col..n {
                    let x = &f * &a[col][c];
                    a[r][c] -= x;
                }
                let x = &f * &b[col];
                b[r] -= x;
            }
        }
    }
    Some((0..n).map(|i| &b[i] / &a[i][i]).collect())
}

fn succ_exact(m: &Mdp, a: usize) -> impl Iterator<Item = (usize, &Rational)> + '_ {
    m.successors(a).iter().map(|&t| t as usize).zip(m.exact_probs(a).expect("exact mode"))
}

/// Weighted reachability of every state under a fixed scheduler, by a direct linear solve.
pub fn chain_values(m: &Mdp, sched: &DmScheduler, targets: &[usize], weights: &[Rational]) -> Vec<Rational> {
    let n = m.num_states();
    let mut weight: Vec<Option<Rational>> = vec![None; n];
    for (t, w) in targets.iter().zip(weights) {
        weight[*t] = Some(w.clone());
    }
    // States that can reach a positively weighted target under the scheduler.
    let mut live = vec![false; n];
    for s in 0..n {
        live[s] = weight[s].as_ref().is_some_and(|w| !w.is_zero());
    }
    loop {
        let mut grew = false;
        for s in 0..n {
            if live[s] || weight[s].is_some() {
                continue;
            }
            if let Some(a) = sched.action(s) {
                if m.successors(a).iter().any(|&t| live[t as usize]) {
                    live[s] = true;
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    let vars: Vec<usize> = (0..n).filter(|&s| live[s] && weight[s].is_none()).collect();
    let pos: BTreeMap<usize, usize> = vars.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let k = vars.len();
    let mut a = vec![vec![Rational::zero(); k]; k];
    let mut b = vec![Rational::zero(); k];
    for (i, &s) in vars.iter().enumerate() {
        a[i][i] += Rational::one();
        let act = sched.action(s).unwrap();
        for (t, p) in succ_exact(m, act) {
            if let Some(&j) = pos.get(&t) {
                a[i][j] -= p;
            } else if let Some(w) = &weight[t] {
                b[i] += p * w;
            }
        }
    }
    let x = gauss(a, b).expect("chain restricted to live states is nonsingular");
    (0..n)
        .map(|s| match (&weight[s], pos.get(&s)) {
            (Some(w), _) => w.clone(),
            (None, Some(&i)) => x[i].clone(),
            _ => Rational::zero(),
        })
        .collect()
}

/// Optimal weighted reachability by enumerating every deterministic memoryless
/// scheduler; `None` when there are more than `limit`.
pub fn brute_force(m: &Mdp, targets: &[usize], weights: &[Rational], limit: usize) -> Option<Vec<Rational>> {
    let all = DmScheduler::enumerate(m, limit)?;
    let mut best = vec![Rational::zero(); m.num_states()];
    for s in &all {
        for (b, v) in best.iter_mut().zip(chain_values(m, s, targets, weights)) {
            if v > *b {
                *b = v;
            }
        }
    }
    Some(best)
}

/// Reachability probability from `from` to each of `targets` under `sched`.
pub fn reach_vector(m: &Mdp, sched: &DmScheduler, from: usize, targets: &[usize]) -> Vec<Rational> {
    (0..targets.len())
        .map(|j| {
            let mut w = vec![Rational::zero(); targets.len()];
            w[j] = Rational::one();
            chain_values(m, sched, targets, &w)[from].clone()
        })
        .collect()
}

/// Exact value at the global entrances of the explicitly built shortcut MDP.
///
/// Its states are the local entrances and local exits. Each local entrance has
/// one action per distinct exit-reachability vector of a deterministic scheduler
/// of its leaf; the missing mass goes to an extra sink. Wired exits move to their
/// partner entrance with probability one; global exits are weighted targets.
/// The value is found by enumerating all schedulers of that MDP.
pub fn shortcut_value(d: &StringDiagram, idx: &ComponentIndex, w: &[Rational], limit: usize) -> Option<Vec<Rational>> {
    let ne = idx.local_entrances.len();
    let nx = idx.local_exits.len();
    let mut b = MdpBuilder::exact();
    let ent: Vec<usize> = (0..ne).map(|i| b.state(format!("e{i}"))).collect();
    let ext: Vec<usize> = (0..nx).map(|o| b.state(format!("x{o}"))).collect();
    let star = b.state("star");
    for comp in &idx.components {
        let leaf = d.leaf(&comp.leaf);
        let m = leaf.mdp();
        let exits = leaf.exits();
        let scheds = DmScheduler::enumerate(m, limit)?;
        for (id, state) in comp.entrances.clone().zip(leaf.entrances()) {
            let mut vectors: Vec<Vec<Rational>> = scheds.iter().map(|s| reach_vector(m, s, state, &exits)).collect();
            vectors.sort();
            vectors.dedup();
            for (a, v) in vectors.into_iter().enumerate() {
                let mut dist: Vec<(usize, Rational)> = Vec::new();
                let mut mass = Rational::zero();
                for (o, p) in comp.exits.clone().zip(v) {
                    if !p.is_zero() {
                        mass += &p;
                        dist.push((ext[o], p));
                    }
                }
                if mass < Rational::one() {
                    dist.push((star, Rational::one() - mass));
                }
                b.action(ent[id], format!("p{a}"), dist);
            }
        }
    }
    for (o, wired) in idx.wiring.iter().enumerate() {
        if let Some(i) = wired {
            b.action(ext[o], "wire", vec![(ent[*i], Rational::one())]);
        }
    }
    let m = b.build().unwrap();
    let targets: Vec<usize> = idx.global_exits.iter().map(|&o| ext[o]).collect();
    let vals = brute_force(&m, &targets, w, limit)?;
    Some(idx.global_entrances.iter().map(|&i| vals[ent[i]].clone()).collect())
}

/// Values at a leaf's entrances for every deterministic scheduler, with the exit reachability vectors.
pub fn leaf_points(o: &OpenMdp, limit: usize) -> Option<Vec<Vec<Vec<Rational>>>> {
    let m = o.mdp();
    let exits = o.exits();
    let scheds = DmScheduler::enumerate(m, limit)?;
    Some(scheds.iter().map(|s| o.entrances().iter().map(|&e| reach_vector(m, s, e, &exits)).collect()).collect())
}

/// Maps `f` over `items` on scoped worker threads, keeping the order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get()).min(items.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut out: Vec<(usize, R)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut mine = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= items.len() {
                            return mine;
                        }
                        mine.push((i, f(&items[i])));
                    }
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, r)| r).collect()
}
