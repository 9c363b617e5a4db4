use super::{DmScheduler, Mdp, TargetWeight, ValueVector};
use crate::error::{Error, Result};
use crate::numeric::FLOAT_TOLERANCE;

fn check_dim(mdp: &Mdp, f: &ValueVector) -> Result<()> {
    if f.len() != mdp.num_states() {
        return Err(Error::Dimension { expected: mdp.num_states(), got: f.len() });
    }
    Ok(())
}

#[inline]
fn bellman_at(mdp: &Mdp, fixed: &[Option<f64>], f: &[f64], s: usize) -> f64 {
    if let Some(w) = fixed[s] {
        return w;
    }
    let mut best = 0.0f64;
    for a in mdp.actions(s) {
        let v = mdp.expect(a, f);
        if v > best {
            best = v;
        }
    }
    best
}

/// One application of the Bellman operator.
pub fn bellman_apply(mdp: &Mdp, tw: &TargetWeight, f: &ValueVector) -> Result<ValueVector> {
    check_dim(mdp, f)?;
    let fixed = tw.dense::<f64>(mdp.num_states());
    Ok(ValueVector((0..mdp.num_states()).map(|s| bellman_at(mdp, &fixed, &f.0, s)).collect()))
}

/// `sweeps` Jacobi applications of the Bellman operator starting from `start`.
///
/// Targets are pinned to their weights before the first sweep, so one sweep
/// already propagates target weights one step back.
pub fn value_iterate(mdp: &Mdp, tw: &TargetWeight, start: &ValueVector, sweeps: usize) -> Result<ValueVector> {
    check_dim(mdp, start)?;
    let fixed = tw.dense::<f64>(mdp.num_states());
    let mut cur = start.0.clone();
    if sweeps > 0 {
        for (s, w) in fixed.iter().enumerate() {
            if let Some(w) = w {
                cur[s] = *w;
            }
        }
    }
    let mut next = vec![0.0; cur.len()];
    for _ in 0..sweeps {
        for (s, slot) in next.iter_mut().enumerate() {
            *slot = bellman_at(mdp, &fixed, &cur, s);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(ValueVector(cur))
}

/// Park check: `Φ(u) ≤ u` pointwise, up to the float tolerance.
pub fn verify_upper(mdp: &Mdp, tw: &TargetWeight, u: &ValueVector) -> bool {
    if u.len() != mdp.num_states() {
        return false;
    }
    let fixed = tw.dense::<f64>(mdp.num_states());
    park_holds(mdp, &fixed, &u.0)
}

fn park_holds(mdp: &Mdp, fixed: &[Option<f64>], u: &[f64]) -> bool {
    (0..mdp.num_states()).all(|s| bellman_at(mdp, fixed, u, s) <= u[s] + FLOAT_TOLERANCE)
}

#[derive(Debug, Clone)]
pub struct OviOptions {
    /// Width of the guessed upper bound above the lower one.
    pub eta: f64,
    /// Budget in full Bellman applications (counted as state updates / state count).
    pub max_applications: u64,
    /// Number of guess-and-verify rounds.
    pub rounds: u32,
    /// Per-SCC sweep budget of the first round; doubled each round.
    pub initial_sweeps: u64,
    /// Near-optimality slack used when extracting the scheduler.
    pub scheduler_tolerance: f64,
}

impl OviOptions {
    pub fn new(eta: f64) -> Self {
        Self { eta, max_applications: 10_000_000, rounds: 12, initial_sweeps: 1_000, scheduler_tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct OviResult {
    pub lower: ValueVector,
    pub upper: ValueVector,
    pub scheduler: DmScheduler,
    pub converged: bool,
    /// Bellman state updates performed.
    pub updates: u64,
}

/// Optimistic value iteration with default options.
pub fn ovi_solve(mdp: &Mdp, tw: &TargetWeight, eta: f64) -> Result<OviResult> {
    ovi_solve_with(mdp, tw, &OviOptions::new(eta), None)
}

/// Optimistic value iteration.
///
/// The lower vector is improved by Gauss-Seidel sweeps over SCCs in sink-first
/// order. After each round a candidate `u = min(1, l + eta)` is checked with
/// [`verify_upper`]; a verified candidate is tightened by applying `Φ` while the
/// check keeps passing. `warm` must be pointwise below the least fixed point.
pub fn ovi_solve_with(mdp: &Mdp, tw: &TargetWeight, opts: &OviOptions, warm: Option<&[f64]>) -> Result<OviResult> {
    if !(opts.eta > 0.0) {
        return Err(Error::Config(format!("eta must be positive, got {}", opts.eta)));
    }
    let n = mdp.num_states();
    let fixed = tw.dense::<f64>(n);
    let mut lower = match warm {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Dimension { expected: n, got: w.len() });
            }
            w.to_vec()
        }
        None => vec![0.0; n],
    };
    for s in 0..n {
        if let Some(w) = fixed[s] {
            lower[s] = w;
        } else if mdp.is_sink(s) {
            lower[s] = 0.0;
        }
    }
    let sccs = mdp.scc_order();
    let budget = opts.max_applications.saturating_mul(n.max(1) as u64);
    let mut updates: u64 = 0;
    let mut delta = opts.eta * 1e-2;
    let mut sweep_cap = opts.initial_sweeps.max(1);
    let mut converged = false;
    let mut upper = vec![1.0; n];

    'rounds: for _ in 0..opts.rounds.max(1) {
        for comp in &sccs {
            let trivial = comp.len() == 1 && {
                let s = comp[0];
                mdp.actions(s).all(|a| mdp.successors(a).iter().all(|&t| t as usize != s))
            };
            let mut sweeps = 0u64;
            loop {
                let mut change = 0.0f64;
                for &s in comp {
                    if fixed[s].is_some() || mdp.is_sink(s) {
                        continue;
                    }
                    let v = bellman_at(mdp, &fixed, &lower, s);
                    if v > lower[s] {
                        change = change.max(v - lower[s]);
                        lower[s] = v;
                    }
                }
                updates += comp.len() as u64;
                sweeps += 1;
                if trivial || change <= delta || sweeps >= sweep_cap {
                    break;
                }
                if updates >= budget {
                    break 'rounds;
                }
            }
        }

        let candidate: Vec<f64> = (0..n)
            .map(|s| match fixed[s] {
                Some(w) => w,
                None if mdp.is_sink(s) => 0.0,
                None => (lower[s] + opts.eta).min(1.0),
            })
            .collect();
        updates += n as u64;
        if park_holds(mdp, &fixed, &candidate) {
            upper = candidate;
            converged = true;
            break;
        }
        if updates >= budget {
            break;
        }
        delta *= 1e-2;
        sweep_cap = sweep_cap.saturating_mul(2);
    }

    if converged {
        for _ in 0..3 {
            let next: Vec<f64> =
                (0..n).map(|s| bellman_at(mdp, &fixed, &upper, s).max(lower[s]).min(upper[s])).collect();
            updates += 2 * n as u64;
            if !park_holds(mdp, &fixed, &next) {
                break;
            }
            upper = next;
        }
    }

    let scheduler = extract_scheduler(mdp, tw, &lower, opts.scheduler_tolerance);
    Ok(OviResult { lower: ValueVector(lower), upper: ValueVector(upper), scheduler, converged, updates })
}

/// Greedy scheduler for `values` that also makes progress towards positive-weight targets.
///
/// Among actions within `tol` of the best expected value, states pick one that
/// leads into the attractor of the targets, so that end components with ties
/// do not trap the induced chain.
pub fn extract_scheduler(mdp: &Mdp, tw: &TargetWeight, values: &[f64], tol: f64) -> DmScheduler {
    let n = mdp.num_states();
    let mut choice: Vec<Option<u32>> = vec![None; n];
    let mut done = vec![false; n];
    let mut best = vec![0.0f64; n];
    let mut argbest: Vec<Option<u32>> = vec![None; n];
    for s in 0..n {
        for a in mdp.actions(s) {
            let v = mdp.expect(a, values);
            if argbest[s].is_none() || v > best[s] {
                best[s] = v;
                argbest[s] = Some(a as u32);
            }
        }
    }
    let mut queue = std::collections::VecDeque::new();
    for (&t, &w) in tw.targets().iter().zip(tw.weights()) {
        if w > 0.0 {
            done[t] = true;
            queue.push_back(t);
        }
    }
    for s in 0..n {
        if mdp.is_sink(s) {
            done[s] = true;
        } else if best[s] <= tol {
            choice[s] = argbest[s];
            done[s] = true;
        }
    }
    let mut preds: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
    for s in 0..n {
        for a in mdp.actions(s) {
            if mdp.expect(a, values) >= best[s] - tol {
                for &t in mdp.successors(a) {
                    preds[t as usize].push((s as u32, a as u32));
                }
            }
        }
    }
    while let Some(t) = queue.pop_front() {
        for &(s, a) in &preds[t] {
            let s = s as usize;
            if !done[s] {
                done[s] = true;
                choice[s] = Some(a);
                queue.push_back(s);
            }
        }
    }
    for s in 0..n {
        if choice[s].is_none() && !mdp.is_sink(s) {
            choice[s] = argbest[s];
        }
    }
    DmScheduler { choice }
}
