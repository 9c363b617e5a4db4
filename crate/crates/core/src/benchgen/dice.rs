//! Dice-game leaves: pick one of several biased dice each round, exit by score band.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagram::OpenMdp;
use crate::error::{Error, Result};
use crate::mdp::MdpBuilder;
use crate::numeric::{format_rational, ratio, Rational};

pub const MAX_SCORE: i64 = 100;
pub const FACES: std::ops::RangeInclusive<i64> = -2..=3;
pub const DEFAULT_ROUNDS: usize = 20;
pub const DEFAULT_START: i64 = 50;

/// A die as `(face, probability)` pairs.
pub type Die = Vec<(i64, Rational)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiceLayout {
    /// Every band is a right exit.
    Plain,
    /// The top band is the only right exit; lower bands leave to the left, and
    /// each left entrance passes straight through to the matching left exit.
    Chain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiceParams {
    pub exits: usize,
    pub rounds: usize,
    pub start: i64,
    pub dice: Vec<Die>,
    pub layout: DiceLayout,
}

impl DiceParams {
    /// Three dice with seeded bias over faces -2..=3.
    pub fn seeded(exits: usize, rounds: usize, seed: u64, layout: DiceLayout) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dice = (0..3)
            .map(|_| {
                let w: Vec<i64> = FACES.map(|_| rng.gen_range(1..=8)).collect();
                let total: i64 = w.iter().sum();
                FACES.zip(w).map(|(f, x)| (f, ratio(x, total))).collect()
            })
            .collect();
        Self { exits, rounds, start: DEFAULT_START, dice, layout }
    }

    /// Exit band of a final score: equal-width bands, the last one closed at 100.
    pub fn band(&self, score: i64) -> usize {
        let width = MAX_SCORE / self.exits as i64;
        ((score / width) as usize).min(self.exits - 1)
    }

    /// Dice as printable `face: p` maps, for metadata.
    pub fn describe(&self) -> Vec<BTreeMap<i64, String>> {
        self.dice.iter().map(|d| d.iter().map(|(f, p)| (*f, format_rational(p))).collect()).collect()
    }
}

pub fn gen_dice_leaf(p: &DiceParams) -> Result<OpenMdp> {
    if !matches!(p.exits, 2 | 4) {
        return Err(Error::Config(format!("dice exit count must be 2 or 4, got {}", p.exits)));
    }
    if p.rounds == 0 {
        return Err(Error::Config("dice game needs at least one round".into()));
    }
    if p.dice.is_empty() || !(0..=MAX_SCORE).contains(&p.start) {
        return Err(Error::Config("dice game needs at least one die and a start score in 0..=100".into()));
    }
    for d in &p.dice {
        let sum: Rational = d.iter().map(|(_, q)| q.clone()).sum();
        if !sum.is_one() {
            return Err(Error::Config(format!("die probabilities sum to {}", format_rational(&sum))));
        }
    }
    let mut b = MdpBuilder::exact();
    let start = b.state(format!("r0s{}", p.start));
    let bands: Vec<usize> = (0..p.exits).map(|j| b.state(format!("band{j}"))).collect();
    let mut frontier: BTreeSet<i64> = BTreeSet::from([p.start]);
    for r in 0..p.rounds {
        let mut next = BTreeSet::new();
        for &s in &frontier {
            let here = b.state(format!("r{r}s{s}"));
            for (i, die) in p.dice.iter().enumerate() {
                let mut dist: BTreeMap<usize, Rational> = BTreeMap::new();
                for (f, q) in die {
                    if q.is_zero() {
                        continue;
                    }
                    let t = (s + f).clamp(0, MAX_SCORE);
                    let target = if r + 1 == p.rounds {
                        bands[p.band(t)]
                    } else {
                        next.insert(t);
                        b.state(format!("r{}s{t}", r + 1))
                    };
                    *dist.entry(target).or_insert_with(Rational::zero) += q;
                }
                b.action(here, format!("die{i}"), dist.into_iter().collect());
            }
        }
        frontier = next;
    }
    match p.layout {
        DiceLayout::Plain => OpenMdp::new(b.build()?, vec![start], vec![], bands, vec![]),
        DiceLayout::Chain => {
            let top = bands[p.exits - 1];
            let low = bands[..p.exits - 1].to_vec();
            let back: Vec<usize> = (0..p.exits - 1).map(|j| b.state(format!("back{j}"))).collect();
            for (&bk, &band) in back.iter().zip(&low) {
                b.action(bk, "pass", vec![(band, Rational::one())]);
            }
            OpenMdp::new(b.build()?, vec![start], back, vec![top], low)
        }
    }
}
