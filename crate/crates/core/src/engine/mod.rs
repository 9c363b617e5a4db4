//! Compositional value iteration with caching and global stopping criteria,
//! plus the monolithic baseline.

mod exact;
mod report;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::diagram::{ComponentIndex, OpenMdp, StringDiagram};
use crate::error::{Error, Result};
use crate::mdp::{mc_reachability, ovi_solve, policy_iteration_exact, TargetWeight};
use crate::numeric::{float_to_ratio, ratio_to_f64_down, ratio_to_f64_up, Rational};
use crate::pareto::{compose_over, AchievablePoint, CacheAnswer, CacheStats, ParetoCache};

pub use exact::{entrance_levels, policy_values, shortcut_bellman_apply, ExactLocal, EXACT_STATE_LIMIT};
pub use report::{EntranceReport, OracleReport, Report, REPORT_SCHEMA};

/// Float lower bounds are lowered by this much so that rounding in the float
/// solvers cannot lift them above the exact value.
pub const LOWER_MARGIN: f64 = 1e-12;

/// Float upper bounds are raised by this much before they are reported or cached.
pub const UPPER_MARGIN: f64 = 1e-12;

/// Reachability points from float chain solves are lowered by this much before caching.
pub const POINT_MARGIN: f64 = 1e-12;

/// Local precision is tightened tenfold on every stall down to this floor.
pub const ETA_FLOOR: f64 = 1e-10;

fn sound_lower(x: f64) -> f64 {
    (x - LOWER_MARGIN).max(0.0)
}

fn sound_upper(x: f64) -> f64 {
    (x + UPPER_MARGIN).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gsc {
    /// Park check of `g + ε` under the shortcut Bellman operator.
    Optimistic,
    /// Over-approximations composed bottom-up and read at the global weight.
    BottomUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheMode {
    None,
    Exact,
    Pareto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CviConfig {
    pub epsilon: f64,
    pub eta: f64,
    pub gsc: Gsc,
    pub cache: CacheMode,
    /// Iterations between stopping-criterion checks.
    pub check_period: u64,
    /// Iteration after which cache reads are bypassed.
    pub cache_cutoff: u64,
    pub iteration_cap: u64,
    /// Wall-clock budget in seconds.
    pub time_cap: Option<f64>,
    /// When false the stopping criterion is never evaluated.
    pub stopping: bool,
}

impl Default for CviConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            eta: 1e-5,
            gsc: Gsc::Optimistic,
            cache: CacheMode::Pareto,
            check_period: 10,
            cache_cutoff: 200,
            iteration_cap: 100_000,
            time_cap: None,
            stopping: true,
        }
    }
}

impl CviConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0,1], got {}", self.epsilon)));
        }
        if !(self.eta > 0.0 && self.eta <= self.epsilon) {
            return Err(Error::Config(format!("eta must lie in (0, epsilon], got {}", self.eta)));
        }
        if self.check_period == 0 {
            return Err(Error::Config("check period must be at least 1".into()));
        }
        if self.time_cap.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("time cap must be positive".into()));
        }
        Ok(())
    }
}

/// The run modes exposed to users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Flatten, then optimistic value iteration.
    Mono,
    /// Compositional, no cache, optimistic stopping.
    Cvi,
    /// Exact-match cache, optimistic stopping.
    OcviExact,
    /// Pareto cache, optimistic stopping.
    OcviPareto,
    /// Pareto cache, bottom-up stopping.
    Symb,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::Mono, Algorithm::Cvi, Algorithm::OcviExact, Algorithm::OcviPareto, Algorithm::Symb];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mono => "mono",
            Algorithm::Cvi => "cvi",
            Algorithm::OcviExact => "ocvi-exact",
            Algorithm::OcviPareto => "ocvi-pareto",
            Algorithm::Symb => "symb",
        }
    }

    /// Sets the cache and stopping criterion of `base` for this mode.
    pub fn configure(self, base: CviConfig) -> CviConfig {
        let (cache, gsc) = match self {
            Algorithm::Mono => (base.cache, base.gsc),
            Algorithm::Cvi => (CacheMode::None, Gsc::Optimistic),
            Algorithm::OcviExact => (CacheMode::Exact, Gsc::Optimistic),
            Algorithm::OcviPareto => (CacheMode::Pareto, Gsc::Optimistic),
            Algorithm::Symb => (CacheMode::Pareto, Gsc::BottomUp),
        };
        CviConfig { cache, gsc, ..base }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub wall_time: f64,
    pub local_solves: u64,
    pub cache: CacheStats,
    /// Stored Pareto generators.
    pub points: usize,
    pub gsc_checks: u64,
    pub gsc_time: f64,
    /// Iteration at which a stopping criterion accepted.
    pub accepted_at: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct CviResult {
    /// Lower bound per global entrance.
    pub lower: Vec<f64>,
    /// Certified upper bound per global entrance, when converged.
    pub upper: Option<Vec<f64>>,
    pub iterations: u64,
    pub converged: bool,
    pub accepted_by: Option<Gsc>,
    pub stats: RunStats,
}

/// `h(o) = w_o` on global exits and `h(o) = g(i_o)` on wired exits.
pub fn propagate(idx: &ComponentIndex, g: &[f64], w: &[f64]) -> Vec<f64> {
    idx.wiring
        .iter()
        .enumerate()
        .map(|(o, wired)| match wired {
            Some(i) => g[*i],
            None => w[idx.global_exit_pos[o].expect("unwired exits are global")],
        })
        .collect()
}

/// Rounds of shortcut policy iteration tried once both bumped candidates fail.
const POLISH_ROUNDS: usize = 4;

/// Opt-GSC: accepts iff a candidate `u` with `g ≤ u ≤ min(1, g + ε)` satisfies
/// `Φ(u) ≤ u` for the shortcut Bellman operator with exact local solves.
///
/// The first candidate is `min(1, g + ε)`. If it is rejected, the bump is
/// graded by [`entrance_levels`] so that it shrinks along the wiring; this is
/// what lets the check pass where components lose no probability mass.
/// Inside wiring cycles that lose no mass, even the graded bump fails unless
/// `g` is an exact fixed point. The last candidates are therefore the exact
/// values of a few rounds of [`policy_values`] bumped by `ε/2`, tried only when
/// the uniform candidate misses by at most `ε/2` and used only while they stay
/// within `ε/2` of `g`.
pub fn opt_gsc_check(
    d: &StringDiagram,
    idx: &ComponentIndex,
    g: &[f64],
    w: &[Rational],
    epsilon: f64,
    solver: &mut ExactLocal,
) -> Result<Option<Vec<Rational>>> {
    let eps = float_to_ratio(epsilon);
    let one = Rational::one();
    let global = |u: &[Rational]| idx.global_entrances.iter().map(|&i| u[i].clone()).collect::<Vec<_>>();
    let lower: Vec<Rational> = g.iter().map(|&x| float_to_ratio(x)).collect();
    let uniform: Vec<Rational> = lower.iter().map(|x| (x + &eps).min(one.clone())).collect();
    let half = &eps / Rational::from_integer(2.into());
    let bound_eta = epsilon / 4.0;
    let excess = park_excess(d, idx, &uniform, w, solver, &half, bound_eta)?;
    if excess.is_zero() {
        return Ok(Some(global(&uniform)));
    }
    let levels = entrance_levels(d, idx);
    let top = levels.iter().copied().max().unwrap_or(0);
    if top > 0 {
        let graded: Vec<Rational> = lower
            .iter()
            .zip(&levels)
            .map(|(x, &l)| {
                let share = Rational::new((l as i64 + 1).into(), (top as i64 + 1).into());
                (x + &eps * share).min(one.clone())
            })
            .collect();
        if park(d, idx, &graded, w, solver, bound_eta)? {
            return Ok(Some(global(&graded)));
        }
    }
    if excess > half {
        // Too far from a fixed point for the polished values to stay near `g`.
        return Ok(None);
    }
    if idx.components.iter().any(|c| d.leaf(&c.leaf).mdp().num_states() > EXACT_STATE_LIMIT) {
        return Ok(None);
    }
    let mut base = lower.clone();
    for _ in 0..POLISH_ROUNDS {
        let v = policy_values(d, idx, &base, w, solver)?;
        base = base.into_iter().zip(v).map(|(a, b)| a.max(b)).collect();
        if base.iter().zip(&lower).any(|(b, l)| b - l > half) {
            break;
        }
        let u: Vec<Rational> = base.iter().map(|x| (x + &half).min(one.clone())).collect();
        if park(d, idx, &u, w, solver, bound_eta)? {
            return Ok(Some(global(&u)));
        }
    }
    Ok(None)
}

fn park(
    d: &StringDiagram,
    idx: &ComponentIndex,
    u: &[Rational],
    w: &[Rational],
    solver: &mut ExactLocal,
    bound_eta: f64,
) -> Result<bool> {
    Ok(park_excess(d, idx, u, w, solver, &Rational::zero(), bound_eta)?.is_zero())
}

/// `max(0, max_i Φ(u)_i - u_i)`; zero only if `u` passes the Park check.
///
/// Stops at the first component whose excess is above `stop`. Leaves above
/// [`EXACT_STATE_LIMIT`] contribute a certified upper bound computed to
/// `bound_eta` in place of their exact value, and a full unit of excess when
/// no bound can be certified, so for them the result may overshoot.
fn park_excess(
    d: &StringDiagram,
    idx: &ComponentIndex,
    u: &[Rational],
    w: &[Rational],
    solver: &mut ExactLocal,
    stop: &Rational,
    bound_eta: f64,
) -> Result<Rational> {
    let mut excess = Rational::zero();
    for (c, comp) in idx.components.iter().enumerate() {
        if comp.entrances.is_empty() {
            continue;
        }
        let weights = exact::component_weights(idx, c, u, w);
        let leaf = d.leaf(&comp.leaf);
        let vals = if leaf.mdp().num_states() > EXACT_STATE_LIMIT {
            match solver.certified_upper(leaf, &weights, bound_eta)? {
                Some(v) => v,
                None => return Ok(Rational::one()),
            }
        } else {
            solver.solve(&comp.leaf, leaf, &weights)?
        };
        for (id, v) in comp.entrances.clone().zip(vals) {
            excess = excess.max(v - &u[id]);
        }
        if excess > *stop {
            break;
        }
    }
    Ok(excess)
}

/// BU-GSC: accepts iff the composed over-approximation is within `ε` of `g`
/// at every global entrance. Fails with `Unsupported` on leaves with more than
/// three exits.
pub fn bu_gsc_check(
    d: &StringDiagram,
    idx: &ComponentIndex,
    cache: &ParetoCache,
    w: &[Rational],
    g: &[f64],
    epsilon: f64,
) -> Result<Option<Vec<Rational>>> {
    let u = compose_over(d, idx, cache, w)?;
    let eps = float_to_ratio(epsilon);
    let ok = idx.global_entrances.iter().zip(&u).all(|(&i, ui)| *ui <= float_to_ratio(g[i]) + &eps);
    Ok(ok.then_some(u))
}

/// A running compositional value iteration.
pub struct Cvi<'a> {
    d: &'a StringDiagram,
    idx: &'a ComponentIndex,
    w: Vec<Rational>,
    wf: Vec<f64>,
    cfg: CviConfig,
    g: Vec<f64>,
    h: Vec<f64>,
    iteration: u64,
    /// Current local precision; starts at `cfg.eta` and shrinks on stalls.
    eta: f64,
    bypass: bool,
    bu_unsupported: bool,
    pareto: ParetoCache,
    memo: HashMap<(String, Vec<u64>), Vec<f64>>,
    memo_stats: CacheStats,
    solver: ExactLocal,
    stats: RunStats,
}

impl<'a> Cvi<'a> {
    pub fn new(d: &'a StringDiagram, idx: &'a ComponentIndex, w: &[Rational], cfg: CviConfig) -> Result<Self> {
        cfg.validate()?;
        if w.len() != idx.global_exits.len() {
            return Err(Error::Dimension { expected: idx.global_exits.len(), got: w.len() });
        }
        let wf: Vec<f64> = w.iter().map(ratio_to_f64_down).collect();
        let eta = cfg.eta;
        let g = vec![0.0; idx.local_entrances.len()];
        let h = propagate(idx, &g, &wf);
        Ok(Self {
            d,
            idx,
            w: w.to_vec(),
            wf,
            cfg,
            g,
            h,
            iteration: 0,
            eta,
            bypass: false,
            bu_unsupported: false,
            pareto: ParetoCache::new(),
            memo: HashMap::new(),
            memo_stats: CacheStats::default(),
            solver: ExactLocal::new(),
            stats: RunStats::default(),
        })
    }

    /// Starts from a previously filled Pareto cache.
    pub fn with_cache(mut self, cache: ParetoCache) -> Self {
        self.pareto = cache;
        self
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn cache(&self) -> &ParetoCache {
        &self.pareto
    }

    pub fn into_cache(self) -> ParetoCache {
        self.pareto
    }

    fn cache_bypassed(&self) -> bool {
        self.bypass || self.iteration > self.cfg.cache_cutoff
    }

    fn ovi_local(&mut self, leaf: &OpenMdp, weights: &[f64], eta: f64) -> Result<crate::mdp::OviResult> {
        self.stats.local_solves += 1;
        let tw = TargetWeight::new(leaf.mdp(), leaf.exits(), weights.to_vec())?;
        ovi_solve(leaf.mdp(), &tw, eta)
    }

    /// Lower bounds at the entrances of component `c` for exit weights `weights`.
    pub fn local_solve(&mut self, c: usize, weights: &[f64]) -> Result<Vec<f64>> {
        let d = self.d;
        let comp = &self.idx.components[c];
        let leaf = d.leaf(&comp.leaf);
        let k = comp.entrances.len();
        if k == 0 {
            return Ok(Vec::new());
        }
        if weights.iter().all(|&x| x == 0.0) {
            return Ok(vec![0.0; k]);
        }
        let entrances = leaf.entrances();
        let bypass = self.cache_bypassed();
        match self.cfg.cache {
            CacheMode::None => {
                let res = self.ovi_local(leaf, weights, self.eta)?;
                Ok(entrances.iter().map(|&i| sound_lower(res.lower[i])).collect())
            }
            CacheMode::Exact => {
                let key = (comp.leaf.clone(), weights.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
                if !bypass {
                    let start = Instant::now();
                    self.memo_stats.queries += 1;
                    let found = self.memo.get(&key).cloned();
                    self.memo_stats.retrieve_time += start.elapsed();
                    if let Some(v) = found {
                        self.memo_stats.hits += 1;
                        return Ok(v);
                    }
                }
                let res = self.ovi_local(leaf, weights, self.eta)?;
                let vals: Vec<f64> = entrances.iter().map(|&i| sound_lower(res.lower[i])).collect();
                let start = Instant::now();
                self.memo.insert(key, vals.clone());
                self.memo_stats.insert_time += start.elapsed();
                Ok(vals)
            }
            CacheMode::Pareto => {
                let wq: Vec<Rational> = weights.iter().map(|&x| float_to_ratio(x)).collect();
                if !bypass {
                    let eta = float_to_ratio(self.eta);
                    if let CacheAnswer::Hit(v) = self.pareto.query(&comp.leaf, k, &wq, &eta)? {
                        return Ok(v.iter().map(ratio_to_f64_down).collect());
                    }
                }
                // Half of eta leaves room for the rounding margins, so the
                // same weight is answered from the cache next time.
                let res = self.ovi_local(leaf, weights, self.eta / 2.0)?;
                if !bypass || self.cfg.gsc == Gsc::BottomUp {
                    let exits = leaf.exits();
                    let reach = mc_reachability(leaf.mdp(), &res.scheduler, &exits, &entrances)?;
                    let points = reach
                        .into_iter()
                        .map(|row| {
                            AchievablePoint::new(
                                row.iter().map(|&p| float_to_ratio((p - POINT_MARGIN).max(0.0))).collect(),
                            )
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let uppers: Vec<Rational> =
                        entrances
                            .iter()
                            .map(|&i| {
                                if res.converged {
                                    float_to_ratio(sound_upper(res.upper[i]))
                                } else {
                                    Rational::one()
                                }
                            })
                            .collect();
                    self.pareto.update(&comp.leaf, &wq, &uppers, points)?;
                }
                Ok(entrances.iter().map(|&i| sound_lower(res.lower[i])).collect())
            }
        }
    }

    /// One iteration: local solves on every component from the current `h`,
    /// patch `g` by pointwise maximum, then propagate. Returns whether `g` grew.
    pub fn step(&mut self) -> Result<bool> {
        self.iteration += 1;
        let idx = self.idx;
        let results: Vec<(usize, Vec<f64>)> = if self.cfg.cache == CacheMode::None {
            self.solve_all_uncached()?
        } else {
            let mut out = Vec::with_capacity(idx.components.len());
            for &c in &idx.topo_order {
                let weights: Vec<f64> = idx.components[c].exits.clone().map(|o| self.h[o]).collect();
                out.push((c, self.local_solve(c, &weights)?));
            }
            out
        };
        let mut changed = false;
        for (c, vals) in results {
            for (id, v) in idx.components[c].entrances.clone().zip(vals) {
                if v > self.g[id] {
                    self.g[id] = v;
                    changed = true;
                }
            }
        }
        self.h = propagate(idx, &self.g, &self.wf);
        Ok(changed)
    }

    fn solve_all_uncached(&mut self) -> Result<Vec<(usize, Vec<f64>)>> {
        let idx = self.idx;
        let d = self.d;
        let eta = self.eta;
        let h = &self.h;
        let job = |c: usize| -> Result<(usize, Vec<f64>, bool)> {
            let comp = &idx.components[c];
            let leaf = d.leaf(&comp.leaf);
            let weights: Vec<f64> = comp.exits.clone().map(|o| h[o]).collect();
            if comp.entrances.is_empty() || weights.iter().all(|&x| x == 0.0) {
                return Ok((c, vec![0.0; comp.entrances.len()], false));
            }
            let tw = TargetWeight::new(leaf.mdp(), leaf.exits(), weights)?;
            let res = ovi_solve(leaf.mdp(), &tw, eta)?;
            Ok((c, leaf.entrances().iter().map(|&i| sound_lower(res.lower[i])).collect(), true))
        };
        #[cfg(feature = "parallel")]
        let raw: Vec<Result<(usize, Vec<f64>, bool)>> = {
            use rayon::prelude::*;
            idx.topo_order.par_iter().map(|&c| job(c)).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let raw: Vec<Result<(usize, Vec<f64>, bool)>> = idx.topo_order.iter().map(|&c| job(c)).collect();
        let mut out = Vec::with_capacity(raw.len());
        for r in raw {
            let (c, v, solved) = r?;
            self.stats.local_solves += solved as u64;
            out.push((c, v));
        }
        Ok(out)
    }

    /// Evaluates the configured stopping criterion; certified upper bounds on acceptance.
    pub fn check(&mut self) -> Result<Option<(Gsc, Vec<Rational>)>> {
        let start = Instant::now();
        self.stats.gsc_checks += 1;
        let mut verdict = None;
        let mut fallback = true;
        if self.cfg.gsc == Gsc::BottomUp && self.cfg.cache == CacheMode::Pareto && !self.bu_unsupported {
            match bu_gsc_check(self.d, self.idx, &self.pareto, &self.w, &self.g, self.cfg.epsilon) {
                Ok(v) => {
                    verdict = v.map(|u| (Gsc::BottomUp, u));
                    fallback = false;
                }
                Err(Error::Unsupported(msg)) => {
                    log::warn!("bottom-up stopping criterion unavailable, using the optimistic one: {msg}");
                    self.bu_unsupported = true;
                }
                Err(e) => return Err(e),
            }
        }
        if fallback {
            verdict = opt_gsc_check(self.d, self.idx, &self.g, &self.w, self.cfg.epsilon, &mut self.solver)?
                .map(|u| (Gsc::Optimistic, u));
        }
        self.stats.gsc_time += start.elapsed().as_secs_f64();
        Ok(verdict)
    }

    /// Iterates until a stopping criterion accepts, the values stall, or a cap is hit.
    pub fn run(&mut self) -> Result<CviResult> {
        let start = Instant::now();
        let cap = self.cfg.time_cap.map(Duration::from_secs_f64);
        let mut accepted: Option<(Gsc, Vec<Rational>)> = None;
        while self.iteration < self.cfg.iteration_cap {
            if cap.is_some_and(|c| start.elapsed() > c) {
                log::info!("time cap reached after {} iterations", self.iteration);
                break;
            }
            let changed = self.step()?;
            if self.cfg.stopping && (!changed || self.iteration % self.cfg.check_period == 0) {
                if let Some(v) = self.check()? {
                    self.stats.accepted_at = Some(self.iteration);
                    accepted = Some(v);
                    break;
                }
            }
            if !changed {
                if self.cfg.cache == CacheMode::Pareto && !self.cache_bypassed() {
                    log::debug!("values stalled at iteration {}; bypassing the cache", self.iteration);
                    self.bypass = true;
                } else if self.eta > ETA_FLOOR {
                    self.eta = (self.eta / 10.0).max(ETA_FLOOR);
                    self.memo.clear();
                    log::debug!("values stalled at iteration {}; local precision now {:e}", self.iteration, self.eta);
                } else {
                    log::debug!("values stalled at iteration {}", self.iteration);
                    if self.cfg.stopping && self.cfg.gsc == Gsc::BottomUp && !self.bu_unsupported {
                        // The composed over-approximation may never get within ε once
                        // the values stop moving; the optimistic check still can.
                        let t = Instant::now();
                        self.stats.gsc_checks += 1;
                        let found =
                            opt_gsc_check(self.d, self.idx, &self.g, &self.w, self.cfg.epsilon, &mut self.solver)?;
                        self.stats.gsc_time += t.elapsed().as_secs_f64();
                        if let Some(u) = found {
                            self.stats.accepted_at = Some(self.iteration);
                            accepted = Some((Gsc::Optimistic, u));
                        }
                    }
                    break;
                }
            }
        }
        self.stats.wall_time = start.elapsed().as_secs_f64();
        self.stats.cache = match self.cfg.cache {
            CacheMode::Pareto => self.pareto.stats().clone(),
            _ => self.memo_stats.clone(),
        };
        self.stats.points = self.pareto.num_points();
        let lower: Vec<f64> = self.idx.global_entrances.iter().map(|&i| self.g[i]).collect();
        let (upper, accepted_by) = match accepted {
            Some((kind, u)) => (Some(u.iter().map(ratio_to_f64_up).collect()), Some(kind)),
            None => (None, None),
        };
        Ok(CviResult {
            lower,
            converged: upper.is_some(),
            upper,
            iterations: self.iteration,
            accepted_by,
            stats: self.stats.clone(),
        })
    }
}

/// Caps the worker threads used for uncached local solves. Call at most once,
/// before the first run.
pub fn configure_threads(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("thread count must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Config(e.to_string()))?;
    Ok(())
}

/// Compositional value iteration on `d` for global exit weights `w`.
pub fn cvi_run(d: &StringDiagram, w: &[Rational], cfg: &CviConfig) -> Result<CviResult> {
    let idx = d.index()?;
    Cvi::new(d, &idx, w, cfg.clone())?.run()
}

/// Monolithic baseline: flatten, then optimistic value iteration with `η = ε`.
pub fn mono_run(d: &StringDiagram, w: &[Rational], cfg: &CviConfig) -> Result<CviResult> {
    cfg.validate()?;
    let start = Instant::now();
    let flat = d.flatten()?;
    let m = flat.mdp();
    let tw = TargetWeight::exact(m, flat.exits(), w.to_vec())?;
    let res = ovi_solve(m, &tw, cfg.epsilon)?;
    let ents = flat.entrances();
    let lower: Vec<f64> = ents.iter().map(|&i| sound_lower(res.lower[i])).collect();
    let upper: Option<Vec<f64>> = res.converged.then(|| ents.iter().map(|&i| sound_upper(res.upper[i])).collect());
    Ok(CviResult {
        lower,
        converged: upper.is_some(),
        upper,
        iterations: res.updates / m.num_states().max(1) as u64,
        accepted_by: None,
        stats: RunStats { wall_time: start.elapsed().as_secs_f64(), local_solves: 1, ..RunStats::default() },
    })
}

/// Runs one of the user-facing algorithms.
pub fn run_algorithm(alg: Algorithm, d: &StringDiagram, w: &[Rational], base: &CviConfig) -> Result<CviResult> {
    match alg {
        Algorithm::Mono => mono_run(d, w, base),
        _ => cvi_run(d, w, &alg.configure(base.clone())),
    }
}

/// Exact optimal value per global entrance of the flattened diagram.
pub fn exact_value(d: &StringDiagram, w: &[Rational]) -> Result<Vec<Rational>> {
    let flat = d.flatten()?;
    let tw = TargetWeight::exact(flat.mdp(), flat.exits(), w.to_vec())?;
    let res = policy_iteration_exact(flat.mdp(), &tw)?;
    Ok(flat.entrances().iter().map(|&i| res.values[i].clone()).collect())
}
