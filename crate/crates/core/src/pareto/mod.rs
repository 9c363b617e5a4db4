//! Finitely generated approximations of achievable exit vectors and the Pareto cache.

mod cache;
mod compose;
pub mod lp;
mod over;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::mdp::DmScheduler;
use crate::numeric::{dot, ratio, Rational};

pub use cache::{CacheAnswer, CacheDump, CacheStats, EntranceDump, LeafEntry, ParetoCache, CACHE_FORMAT};
pub use compose::compose_over;
pub use over::{Halfspace, ParetoOver, MAX_VERTEX_DIM};

/// Slack allowed before an inserted point or bound counts as contradictory.
pub fn soundness_slack() -> Rational {
    ratio(1, 1_000_000_000)
}

/// A reachability vector over an open MDP's exits.
#[derive(Debug, Clone, PartialEq)]
pub struct AchievablePoint {
    pub coords: Vec<Rational>,
    /// The scheduler that realizes the point, if known.
    pub scheduler: Option<DmScheduler>,
}

impl AchievablePoint {
    pub fn new(coords: Vec<Rational>) -> Result<Self> {
        let sum = coords.iter().fold(Rational::zero(), |acc, x| acc + x);
        if coords.iter().any(|x| x.is_negative() || *x > Rational::one()) || sum > Rational::one() + soundness_slack() {
            return Err(Error::SoundnessFault(format!(
                "point {:?} is not a sub-distribution",
                coords.iter().map(crate::numeric::ratio_to_f64).collect::<Vec<_>>()
            )));
        }
        Ok(Self { coords, scheduler: None })
    }

    pub fn with_scheduler(mut self, sched: DmScheduler) -> Self {
        self.scheduler = Some(sched);
        self
    }

    /// `q ≤ self` coordinatewise.
    pub fn dominates(&self, q: &[Rational]) -> bool {
        self.coords.iter().zip(q).all(|(a, b)| b <= a)
    }
}

/// Under-approximation: downward and convex closure of finitely many points.
#[derive(Debug, Clone)]
pub struct ParetoUnder {
    dim: usize,
    generators: Vec<AchievablePoint>,
}

impl ParetoUnder {
    pub fn new(dim: usize) -> Self {
        Self { dim, generators: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[AchievablePoint] {
        &self.generators
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// `max {w·p | p generator}`; zero when empty.
    pub fn read(&self, w: &[Rational]) -> Rational {
        self.generators.iter().map(|p| dot(w, &p.coords)).max().unwrap_or_else(Rational::zero)
    }

    /// Adds a point unless an existing generator dominates it; drops generators it dominates.
    pub fn insert(&mut self, p: AchievablePoint) -> Result<bool> {
        if p.coords.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: p.coords.len() });
        }
        if self.generators.iter().any(|g| g.dominates(&p.coords)) {
            return Ok(false);
        }
        self.generators.retain(|g| !p.dominates(&g.coords));
        self.generators.push(p);
        Ok(true)
    }
}
