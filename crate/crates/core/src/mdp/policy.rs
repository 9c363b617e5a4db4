use super::linear::SparseSystem;
use super::solve::{ovi_solve_with, OviOptions};
use super::{DmScheduler, Mdp, TargetWeight};
use crate::error::Result;

use crate::numeric::{Rational, Scalar};

#[derive(Debug, Clone)]
pub struct PolicyResult<T> {
    pub values: Vec<T>,
    pub scheduler: DmScheduler,
    /// Number of policy evaluations performed.
    pub evaluations: usize,
}

/// Solves the chain induced by `sched` for several right-hand sides at once.
///
/// `fixed_value(t)` gives the right-hand-side row contributed by a transition
/// into the non-variable state `t`, or `None` when it contributes nothing.
fn solve_chain<T: Scalar>(
    mdp: &Mdp,
    sched: &DmScheduler,
    vars: &[bool],
    width: usize,
    fixed_value: impl Fn(usize) -> Option<Vec<T>>,
) -> Result<Vec<Vec<T>>> {
    let n = mdp.num_states();
    let mut var_of = vec![usize::MAX; n];
    let mut states = Vec::new();
    for s in 0..n {
        if vars[s] {
            var_of[s] = states.len();
            states.push(s);
        }
    }
    let mut sys: SparseSystem<T> = SparseSystem::new(states.len(), width);
    for (i, &s) in states.iter().enumerate() {
        let a = sched.action(s).expect("variable state without a chosen action");
        let probs: Vec<T> = mdp.scalar_probs(a);
        for (&t, p) in mdp.successors(a).iter().zip(probs) {
            let t = t as usize;
            if vars[t] {
                sys.add_coef(i, var_of[t], p);
            } else if let Some(col) = fixed_value(t) {
                for (k, c) in col.into_iter().enumerate() {
                    if !c.is_zero() {
                        sys.add_rhs(i, k, p.times(&c));
                    }
                }
            }
        }
    }
    let chosen = chosen_actions(mdp, sched);
    let order: Vec<usize> =
        mdp.scc_order_filtered(|a| chosen[a]).into_iter().flatten().filter(|&s| vars[s]).map(|s| var_of[s]).collect();
    let sol = sys.solve(&order)?;
    let mut out = vec![vec![T::zero(); width]; n];
    for (i, &s) in states.iter().enumerate() {
        out[s] = sol[i].clone();
    }
    Ok(out)
}

fn chosen_actions(mdp: &Mdp, sched: &DmScheduler) -> Vec<bool> {
    let mut chosen = vec![false; mdp.num_actions()];
    for s in 0..mdp.num_states() {
        if let Some(a) = sched.action(s) {
            chosen[a] = true;
        }
    }
    chosen
}

fn reaching(mdp: &Mdp, sched: &DmScheduler, goal: &[bool]) -> Vec<bool> {
    let chosen = chosen_actions(mdp, sched);
    mdp.backward_reachable(goal, |a| chosen[a])
}

/// Values of the weighted objective under a fixed scheduler.
///
/// States that cannot reach a positive-weight target are fixed to zero before
/// the linear solve, which keeps the system nonsingular.
pub fn evaluate_scheduler<T: Scalar>(mdp: &Mdp, tw: &TargetWeight, sched: &DmScheduler) -> Result<Vec<T>> {
    sched.validate(mdp)?;
    let n = mdp.num_states();
    let weights: Vec<T> = tw.scalar_weights();
    let mut fixed: Vec<Option<T>> = vec![None; n];
    let mut goal = vec![false; n];
    for (&t, w) in tw.targets().iter().zip(&weights) {
        goal[t] = !w.is_zero();
        fixed[t] = Some(w.clone());
    }
    let reach = reaching(mdp, sched, &goal);
    let vars: Vec<bool> = (0..n).map(|s| reach[s] && fixed[s].is_none() && !mdp.is_sink(s)).collect();
    let sol = solve_chain(mdp, sched, &vars, 1, |t| fixed[t].clone().map(|w| vec![w]))?;
    Ok((0..n)
        .map(|s| match &fixed[s] {
            Some(w) => w.clone(),
            None => sol[s][0].clone(),
        })
        .collect())
}

/// Probability of reaching each of `targets` from every state under `sched`.
///
/// Row `s` holds one entry per target; targets themselves get a unit row.
pub fn reach_matrix<T: Scalar>(mdp: &Mdp, sched: &DmScheduler, targets: &[usize]) -> Result<Vec<Vec<T>>> {
    sched.validate(mdp)?;
    let n = mdp.num_states();
    let k = targets.len();
    let mut col_of: Vec<Option<usize>> = vec![None; n];
    let mut goal = vec![false; n];
    for (i, &t) in targets.iter().enumerate() {
        col_of[t] = Some(i);
        goal[t] = true;
    }
    let reach = reaching(mdp, sched, &goal);
    let vars: Vec<bool> = (0..n).map(|s| reach[s] && !goal[s] && !mdp.is_sink(s)).collect();
    let unit = |i: usize| {
        let mut v = vec![T::zero(); k];
        v[i] = T::one();
        v
    };
    let mut out = solve_chain(mdp, sched, &vars, k, |t| col_of[t].map(unit))?;
    for (i, &t) in targets.iter().enumerate() {
        out[t] = unit(i);
    }
    Ok(out)
}

/// Float reachability probabilities from each of `sources` to each of `targets`.
pub fn mc_reachability(mdp: &Mdp, sched: &DmScheduler, targets: &[usize], sources: &[usize]) -> Result<Vec<Vec<f64>>> {
    let m = reach_matrix::<f64>(mdp, sched, targets)?;
    Ok(sources.iter().map(|&s| m[s].iter().map(|p| p.clamp(0.0, 1.0)).collect()).collect())
}

/// Exact reachability probabilities from each of `sources` to each of `targets`.
pub fn mc_reachability_exact(
    mdp: &Mdp,
    sched: &DmScheduler,
    targets: &[usize],
    sources: &[usize],
) -> Result<Vec<Vec<Rational>>> {
    let m = reach_matrix::<Rational>(mdp, sched, targets)?;
    Ok(sources.iter().map(|&s| m[s].clone()).collect())
}

/// Policy iteration in the scalar type `T`.
///
/// Improvement switches an action only on strict improvement, so the result is
/// the least fixed point of the Bellman operator.
pub fn policy_iteration<T: Scalar>(mdp: &Mdp, tw: &TargetWeight, init: Option<DmScheduler>) -> Result<PolicyResult<T>> {
    let n = mdp.num_states();
    let mut sched = init.unwrap_or_else(|| DmScheduler::first(mdp));
    let fixed: Vec<bool> = {
        let mut f = vec![false; n];
        for &t in tw.targets() {
            f[t] = true;
        }
        f
    };
    let probs: Vec<Vec<T>> = (0..mdp.num_actions()).map(|a| mdp.scalar_probs(a)).collect();
    let expect = |a: usize, v: &[T]| -> T {
        let mut acc = T::zero();
        for (&t, p) in mdp.successors(a).iter().zip(&probs[a]) {
            let x = &v[t as usize];
            if !x.is_zero() {
                acc.add_assign(&p.times(x));
            }
        }
        acc
    };
    let mut evaluations = 0;
    loop {
        let values: Vec<T> = evaluate_scheduler(mdp, tw, &sched)?;
        evaluations += 1;
        let mut changed = false;
        for s in 0..n {
            if fixed[s] || mdp.is_sink(s) {
                continue;
            }
            let cur = sched.action(s).unwrap();
            let mut best = expect(cur, &values);
            let mut best_a = cur;
            for a in mdp.actions(s) {
                if a == cur {
                    continue;
                }
                let v = expect(a, &values);
                if v.improves(&best) {
                    best = v;
                    best_a = a;
                }
            }
            if best_a != cur {
                sched.choice[s] = Some(best_a as u32);
                changed = true;
            }
        }
        if !changed {
            return Ok(PolicyResult { values, scheduler: sched, evaluations });
        }
    }
}

/// Exact least fixed point, warm-started from a float OVI scheduler.
pub fn policy_iteration_exact(mdp: &Mdp, tw: &TargetWeight) -> Result<PolicyResult<Rational>> {
    let warm = ovi_solve_with(mdp, tw, &OviOptions::new(1e-9), None)?;
    policy_iteration::<Rational>(mdp, tw, Some(warm.scheduler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::fixtures::loop_left;
    use crate::mdp::{value_iterate, MdpBuilder, ValueVector};
    use crate::numeric::ratio;

    #[test]
    fn loop_left_points() {
        let m = loop_left();
        let exr = m.state_index("exr1").unwrap();
        let exl = m.state_index("exl1").unwrap();
        let enr = m.state_index("enr1").unwrap();
        let a = DmScheduler::from_labels(&m, &[("s1", "a")]).unwrap();
        let b = DmScheduler::from_labels(&m, &[("s1", "b")]).unwrap();
        let pa = mc_reachability_exact(&m, &a, &[exr, exl], &[enr]).unwrap();
        assert_eq!(pa[0], vec![ratio(1, 2), ratio(1, 2)]);
        let pb = mc_reachability_exact(&m, &b, &[exr, exl], &[enr]).unwrap();
        assert_eq!(pb[0], vec![ratio(0, 1), ratio(1, 1)]);
        let pf = mc_reachability(&m, &a, &[exr, exl], &[enr]).unwrap();
        assert_eq!(pf[0], vec![0.5, 0.5]);
    }

    #[test]
    fn loop_left_exact_values() {
        let m = loop_left();
        let exr = m.state_index("exr1").unwrap();
        let exl = m.state_index("exl1").unwrap();
        let enr = m.state_index("enr1").unwrap();
        let s1 = m.state_index("s1").unwrap();
        let tw = TargetWeight::exact(&m, vec![exr, exl], vec![ratio(0, 1), ratio(1, 1)]).unwrap();
        let r = policy_iteration_exact(&m, &tw).unwrap();
        assert_eq!(r.values[enr], ratio(1, 1));
        assert_eq!(m.action_label(r.scheduler.action(s1).unwrap()), "b");
        let tw = TargetWeight::exact(&m, vec![exr, exl], vec![ratio(1, 1), ratio(0, 1)]).unwrap();
        let r = policy_iteration::<Rational>(&m, &tw, None).unwrap();
        assert_eq!(r.values[enr], ratio(1, 2));
    }

    #[test]
    fn target_free_chain_is_zero() {
        let m = loop_left();
        let sched = DmScheduler::first(&m);
        let rows = mc_reachability(&m, &sched, &[], &[0, 1, 2]).unwrap();
        assert!(rows.iter().all(|r| r.is_empty()));
        let tw = TargetWeight::new(&m, vec![], vec![]).unwrap();
        let v: Vec<f64> = evaluate_scheduler(&m, &tw, &sched).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn end_component_without_target_mass() {
        // s <-> u loop with an escape to the goal from s only via a second action.
        let mut b = MdpBuilder::exact();
        let s = b.state("s");
        let u = b.state("u");
        let g = b.state("g");
        let f = b.state("f");
        b.action(s, "loop", vec![(u, ratio(1, 1))]);
        b.action(s, "try", vec![(g, ratio(1, 3)), (f, ratio(2, 3))]);
        b.action(u, "back", vec![(s, ratio(1, 1))]);
        let m = b.build().unwrap();
        let tw = TargetWeight::unit(&m, g).unwrap();
        let r = policy_iteration::<Rational>(&m, &tw, None).unwrap();
        assert_eq!(r.values[s], ratio(1, 3));
        assert_eq!(r.values[u], ratio(1, 3));
        let vi = value_iterate(&m, &tw, &ValueVector::bottom(4), 10).unwrap();
        assert!((vi[s] - 1.0 / 3.0).abs() < 1e-12);
    }
}
