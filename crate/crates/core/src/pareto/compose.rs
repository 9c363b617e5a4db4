use num_traits::{One, Signed, Zero};

use super::{ParetoCache, ParetoOver, MAX_VERTEX_DIM};
use crate::diagram::{ComponentIndex, StringDiagram};
use crate::error::{Error, Result};
use crate::mdp::{policy_iteration_exact, MdpBuilder, TargetWeight};
use crate::numeric::Rational;

/// Upper bound on the optimal value at every global entrance, from the cached
/// over-approximations composed along the diagram.
///
/// Builds the shortcut MDP over local open ends: each local entrance gets one
/// action per vertex `p` of its `U_i ∩ {Σp ≤ 1}`, moving to exit `o` with
/// probability `p(o)` and to a losing sink with the deficit. Wired exits are
/// identified with their partner entrances. Leaves missing from the cache use
/// the unit box.
pub fn compose_over(
    d: &StringDiagram,
    idx: &ComponentIndex,
    cache: &ParetoCache,
    w: &[Rational],
) -> Result<Vec<Rational>> {
    if w.len() != idx.global_exits.len() {
        return Err(Error::Dimension { expected: idx.global_exits.len(), got: w.len() });
    }
    let mut b = MdpBuilder::exact();
    let entrance: Vec<usize> = (0..idx.local_entrances.len()).map(|i| b.state(format!("i{i}"))).collect();
    let exit: Vec<usize> = (0..idx.global_exits.len()).map(|k| b.state(format!("o{k}"))).collect();
    let star = b.state("*");
    let one = Rational::one();
    for comp in &idx.components {
        let leaf = d.leaf(&comp.leaf);
        let exits = comp.exits.len();
        if exits > MAX_VERTEX_DIM {
            return Err(Error::Unsupported(format!(
                "leaf {:?} has {exits} exits; composing over-approximations needs at most {MAX_VERTEX_DIM}",
                comp.leaf
            )));
        }
        let cached = cache.get(&comp.leaf);
        let fresh = ParetoOver::new(exits);
        for (j, id) in comp.entrances.clone().enumerate() {
            let mut over = match cached {
                Some(e) if e.over.len() == leaf.entrances().len() && e.exits() == exits => e.over[j].clone(),
                _ => fresh.clone(),
            };
            over.cut(vec![one.clone(); exits], one.clone());
            let vertices = over.vertices().expect("vertices kept in low dimension");
            for (t, v) in vertices.iter().enumerate() {
                let mut dist = Vec::new();
                let mut mass = Rational::zero();
                for (k, p) in comp.exits.clone().zip(v) {
                    if p.is_zero() {
                        continue;
                    }
                    let target = match idx.wiring[k] {
                        Some(e) => entrance[e],
                        None => exit[idx.global_exit_pos[k].expect("unwired exits are global")],
                    };
                    dist.push((target, p.clone()));
                    mass += p;
                }
                let deficit = &one - &mass;
                if deficit.is_positive() {
                    dist.push((star, deficit));
                }
                b.action(entrance[id], format!("v{t}"), dist);
            }
        }
    }
    let m = b.build()?;
    let tw = TargetWeight::exact(&m, exit, w.to_vec())?;
    let res = policy_iteration_exact(&m, &tw)?;
    Ok(idx.global_entrances.iter().map(|&i| res.values[entrance[i]].clone()).collect())
}
