use std::collections::BTreeMap;
use std::time::Duration;

use num_traits::Signed;
use serde::{Deserialize, Serialize};
use web_time::Instant;

use super::{soundness_slack, AchievablePoint, ParetoOver, ParetoUnder};
use crate::error::{Error, Result};
use crate::numeric::{dot, format_rational, parse_rational, Rational};

pub const CACHE_FORMAT: &str = "pareto-cache/1";

/// Sound approximations for every entrance of one nominal leaf.
#[derive(Debug, Clone)]
pub struct LeafEntry {
    pub under: Vec<ParetoUnder>,
    pub over: Vec<ParetoOver>,
    exits: usize,
}

impl LeafEntry {
    pub fn new(entrances: usize, exits: usize) -> Self {
        Self { under: vec![ParetoUnder::new(exits); entrances], over: vec![ParetoOver::new(exits); entrances], exits }
    }

    pub fn exits(&self) -> usize {
        self.exits
    }

    /// `max_i U_i(w) - L_i(w)`.
    pub fn gap(&self, w: &[Rational]) -> Rational {
        self.under.iter().zip(&self.over).map(|(l, u)| u.read(w) - l.read(w)).max().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub queries: u64,
    pub hits: u64,
    /// Time spent in updates.
    #[serde(with = "secs")]
    pub insert_time: Duration,
    /// Time spent answering queries.
    #[serde(with = "secs")]
    pub retrieve_time: Duration,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let x = f64::deserialize(d)?;
        Duration::try_from_secs_f64(x).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CacheAnswer {
    /// Lower reads per entrance.
    Hit(Vec<Rational>),
    Miss,
}

/// Per-leaf store of `(L, U)` pairs, keyed by nominal leaf name.
#[derive(Debug, Clone, Default)]
pub struct ParetoCache {
    entries: BTreeMap<String, LeafEntry>,
    stats: CacheStats,
}

impl ParetoCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    pub fn get(&self, leaf: &str) -> Option<&LeafEntry> {
        self.entries.get(leaf)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (&String, &LeafEntry)> {
        self.entries.iter()
    }

    /// Total number of stored generators.
    pub fn num_points(&self) -> usize {
        self.entries.values().flat_map(|e| &e.under).map(|l| l.generators().len()).sum()
    }

    fn entry(&mut self, leaf: &str, entrances: usize, exits: usize) -> Result<&mut LeafEntry> {
        let e = self.entries.entry(leaf.to_string()).or_insert_with(|| LeafEntry::new(entrances, exits));
        if e.under.len() != entrances || e.exits() != exits {
            return Err(Error::Query(format!(
                "leaf {leaf:?} cached with {} entrances and {} exits, queried with {entrances} and {exits}",
                e.under.len(),
                e.exits()
            )));
        }
        Ok(e)
    }

    /// Hit iff every entrance's gap at `w` is at most `eta`.
    pub fn query(&mut self, leaf: &str, entrances: usize, w: &[Rational], eta: &Rational) -> Result<CacheAnswer> {
        let start = Instant::now();
        let entry = self.entry(leaf, entrances, w.len())?;
        let hit = entry.gap(w) <= *eta;
        let answer =
            if hit { CacheAnswer::Hit(entry.under.iter().map(|l| l.read(w)).collect()) } else { CacheAnswer::Miss };
        self.stats.queries += 1;
        if hit {
            self.stats.hits += 1;
        }
        self.stats.retrieve_time += start.elapsed();
        Ok(answer)
    }

    /// Inserts per-entrance points and the halfspaces `w·p ≤ upper_i`.
    ///
    /// A point outside the current over-approximation, or a bound below an
    /// existing generator, by more than the soundness slack is a fault.
    pub fn update(
        &mut self,
        leaf: &str,
        w: &[Rational],
        uppers: &[Rational],
        points: Vec<AchievablePoint>,
    ) -> Result<()> {
        let start = Instant::now();
        let entrances = uppers.len();
        if points.len() != entrances {
            return Err(Error::Dimension { expected: entrances, got: points.len() });
        }
        let slack = soundness_slack();
        let entry = self.entry(leaf, entrances, w.len())?;
        for (i, (p, u)) in points.into_iter().zip(uppers).enumerate() {
            let (under, over) = (&mut entry.under[i], &mut entry.over[i]);
            if !over.contains(&p.coords, &slack) {
                return Err(Error::SoundnessFault(format!(
                    "{leaf}: point at entrance {i} violates the over-approximation"
                )));
            }
            let lower = under.read(w).max(dot(w, &p.coords));
            if lower > u + &slack {
                return Err(Error::SoundnessFault(format!(
                    "{leaf}: bound at entrance {i} is below an achievable point"
                )));
            }
            under.insert(p)?;
            over.cut(w.to_vec(), lower.max(u.clone()));
        }
        self.stats.insert_time += start.elapsed();
        Ok(())
    }

    pub fn dump(&self) -> CacheDump {
        let leaves = self
            .entries
            .iter()
            .map(|(name, e)| {
                let per = e
                    .under
                    .iter()
                    .zip(&e.over)
                    .map(|(l, u)| EntranceDump {
                        exits: u.dim(),
                        generators: l
                            .generators()
                            .iter()
                            .map(|p| p.coords.iter().map(format_rational).collect())
                            .collect(),
                        halfspaces: u
                            .halfspaces()
                            .iter()
                            .map(|h| (h.normal.iter().map(format_rational).collect(), format_rational(&h.bound)))
                            .collect(),
                    })
                    .collect();
                (name.clone(), per)
            })
            .collect();
        CacheDump { format: CACHE_FORMAT.to_string(), leaves }
    }

    pub fn from_dump(dump: &CacheDump) -> Result<Self> {
        if dump.format != CACHE_FORMAT {
            return Err(Error::Parse(format!("unsupported cache format {:?}", dump.format)));
        }
        let parse = |xs: &[String]| xs.iter().map(|x| parse_rational(x)).collect::<Result<Vec<_>>>();
        let mut cache = Self::new();
        for (name, per) in &dump.leaves {
            let exits = per.first().map_or(0, |e| e.exits);
            let mut entry = LeafEntry::new(per.len(), exits);
            for (i, e) in per.iter().enumerate() {
                for (n, b) in &e.halfspaces {
                    let normal = parse(n)?;
                    if normal.len() != exits {
                        return Err(Error::Dimension { expected: exits, got: normal.len() });
                    }
                    if normal.iter().any(|x| x.is_negative()) {
                        return Err(Error::Parse(format!("{name}: negative halfspace normal")));
                    }
                    entry.over[i].cut(normal, parse_rational(b)?);
                }
                for g in &e.generators {
                    let p = AchievablePoint::new(parse(g)?)?;
                    if !entry.over[i].contains(&p.coords, &soundness_slack()) {
                        return Err(Error::SoundnessFault(format!("{name}: stored point outside stored bounds")));
                    }
                    entry.under[i].insert(p)?;
                }
            }
            cache.entries.insert(name.clone(), entry);
        }
        Ok(cache)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheDump {
    pub format: String,
    pub leaves: BTreeMap<String, Vec<EntranceDump>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntranceDump {
    pub exits: usize,
    pub generators: Vec<Vec<String>>,
    pub halfspaces: Vec<(Vec<String>, String)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ratio;

    fn v(xs: &[(i64, i64)]) -> Vec<Rational> {
        xs.iter().map(|&(n, d)| ratio(n, d)).collect()
    }

    fn point(xs: &[(i64, i64)]) -> AchievablePoint {
        AchievablePoint::new(v(xs)).unwrap()
    }

    #[test]
    fn fresh_cache_misses() {
        let mut c = ParetoCache::new();
        let a = c.query("A", 1, &v(&[(1, 1), (0, 1)]), &ratio(1, 100_000)).unwrap();
        assert_eq!(a, CacheAnswer::Miss);
        assert_eq!(c.stats().queries, 1);
        assert_eq!(c.stats().hits, 0);
    }

    #[test]
    fn update_then_replay_hits() {
        let mut c = ParetoCache::new();
        let w = v(&[(1, 1), (0, 1)]);
        c.update("A", &w, &[ratio(1, 2)], vec![point(&[(1, 2), (1, 2)])]).unwrap();
        let e = c.get("A").unwrap();
        assert_eq!(e.under[0].read(&w), ratio(1, 2));
        assert_eq!(e.over[0].read(&w), ratio(1, 2));
        assert_eq!(c.query("A", 1, &w, &Rational::default()).unwrap(), CacheAnswer::Hit(vec![ratio(1, 2)]));
    }

    #[test]
    fn updates_are_idempotent() {
        let mut c = ParetoCache::new();
        let w = v(&[(1, 1), (0, 1)]);
        for _ in 0..2 {
            c.update("A", &w, &[ratio(1, 2)], vec![point(&[(1, 2), (1, 2)])]).unwrap();
        }
        let e = c.get("A").unwrap();
        assert_eq!(e.under[0].generators().len(), 1);
        assert_eq!(e.over[0].halfspaces().len(), 1);
    }

    #[test]
    fn two_axis_bounds() {
        let mut c = ParetoCache::new();
        c.update("A", &v(&[(1, 1), (0, 1)]), &[ratio(1, 2)], vec![point(&[(1, 2), (0, 1)])]).unwrap();
        c.update("A", &v(&[(0, 1), (1, 1)]), &[ratio(1, 1)], vec![point(&[(0, 1), (1, 2)])]).unwrap();
        let u = &c.get("A").unwrap().over[0];
        assert!(u.read(&v(&[(1, 2), (1, 2)])) <= ratio(3, 4));
    }

    #[test]
    fn contradicting_point_is_a_fault() {
        let mut c = ParetoCache::new();
        let w = v(&[(1, 1), (0, 1)]);
        c.update("A", &w, &[ratio(1, 2)], vec![point(&[(1, 2), (0, 1)])]).unwrap();
        let err = c.update("A", &v(&[(0, 1), (1, 1)]), &[ratio(1, 1)], vec![point(&[(9, 10), (0, 1)])]);
        assert!(matches!(err, Err(Error::SoundnessFault(_))));
        let err = c.update("A", &v(&[(1, 1), (1, 1)]), &[ratio(1, 10)], vec![point(&[(0, 1), (0, 1)])]);
        assert!(matches!(err, Err(Error::SoundnessFault(_))));
    }

    #[test]
    fn dump_roundtrip() {
        let mut c = ParetoCache::new();
        c.update("A", &v(&[(8, 10), (3, 10)]), &[ratio(2, 5)], vec![point(&[(4, 10), (1, 10)])]).unwrap();
        c.update("A", &v(&[(2, 10), (7, 10)]), &[ratio(3, 10)], vec![point(&[(1, 10), (35, 100)])]).unwrap();
        let d = c.dump();
        let json = serde_json::to_string(&d).unwrap();
        let back = ParetoCache::from_dump(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.dump(), d);
        let w = v(&[(75, 100), (3, 10)]);
        assert_eq!(back.get("A").unwrap().gap(&w), c.get("A").unwrap().gap(&w));
    }
}
