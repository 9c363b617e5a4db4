use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Algorithm, CviConfig, CviResult, Gsc};
use crate::numeric::{float_to_ratio, format_rational, ratio_to_f64, Rational};

pub const REPORT_SCHEMA: &str = "cvi-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntranceReport {
    pub name: String,
    pub lower: f64,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// Exact value at the query entrance, as `p/q`.
    pub exact: String,
    pub exact_f64: f64,
    /// `lower ≤ exact ≤ lower + ε` at the query entrance.
    pub within_epsilon: bool,
}

/// Machine-readable summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub algorithm: Algorithm,
    pub epsilon: f64,
    pub eta: f64,
    pub query_entrance: String,
    pub value: f64,
    pub entrances: Vec<EntranceReport>,
    pub iterations: u64,
    pub converged: bool,
    pub gsc: Option<Gsc>,
    pub gsc_iteration: Option<u64>,
    pub gsc_checks: u64,
    pub local_solves: u64,
    /// Wall time in seconds.
    pub t: f64,
    /// Time spent inserting into the cache.
    pub t_i: f64,
    /// Time spent querying the cache.
    pub t_r: f64,
    #[serde(rename = "H")]
    pub hits: u64,
    #[serde(rename = "Q")]
    pub queries: u64,
    #[serde(rename = "P")]
    pub points: usize,
    pub oracle: Option<OracleReport>,
}

impl Report {
    pub fn new(alg: Algorithm, cfg: &CviConfig, names: &[String], query: usize, res: &CviResult) -> Self {
        let entrances = names
            .iter()
            .enumerate()
            .map(|(i, n)| EntranceReport {
                name: n.clone(),
                lower: res.lower[i],
                upper: res.upper.as_ref().map(|u| u[i]),
            })
            .collect();
        Report {
            schema: REPORT_SCHEMA.to_string(),
            algorithm: alg,
            epsilon: cfg.epsilon,
            eta: cfg.eta,
            query_entrance: names[query].clone(),
            value: res.lower[query],
            entrances,
            iterations: res.iterations,
            converged: res.converged,
            gsc: res.accepted_by,
            gsc_iteration: res.stats.accepted_at,
            gsc_checks: res.stats.gsc_checks,
            local_solves: res.stats.local_solves,
            t: res.stats.wall_time,
            t_i: res.stats.cache.insert_time.as_secs_f64(),
            t_r: res.stats.cache.retrieve_time.as_secs_f64(),
            hits: res.stats.cache.hits,
            queries: res.stats.cache.queries,
            points: res.stats.points,
            oracle: None,
        }
    }

    /// Compares the query value against an exact reference.
    pub fn with_oracle(mut self, exact: &Rational) -> Self {
        let lower = float_to_ratio(self.value);
        let within = lower <= *exact && *exact <= lower + float_to_ratio(self.epsilon);
        self.oracle = Some(OracleReport {
            exact: format_rational(exact),
            exact_f64: ratio_to_f64(exact),
            within_epsilon: within,
        });
        self
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "algorithm   {}", self.algorithm);
        let _ = writeln!(s, "value       {:.10} at {}", self.value, self.query_entrance);
        let status = match (self.converged, self.gsc) {
            (true, Some(g)) => format!("converged ({g:?} criterion, iteration {})", self.gsc_iteration.unwrap_or(0)),
            (true, None) => "converged".to_string(),
            (false, _) => "NOT converged".to_string(),
        };
        let _ = writeln!(s, "status      {status}");
        let _ = writeln!(s, "iterations  {}", self.iterations);
        let _ = writeln!(s, "time        {:.3}s (insert {:.3}s, retrieve {:.3}s)", self.t, self.t_i, self.t_r);
        if self.queries > 0 {
            let _ = writeln!(s, "cache       {}/{} hits, {} points", self.hits, self.queries, self.points);
        }
        if let Some(o) = &self.oracle {
            let verdict = if o.within_epsilon { "ok" } else { "MISMATCH" };
            let _ = writeln!(s, "exact       {} = {:.10} ({verdict})", o.exact, o.exact_f64);
        }
        if self.entrances.len() > 1 {
            let _ = writeln!(s, "entrances");
            for e in &self.entrances {
                match e.upper {
                    Some(u) => {
                        let _ = writeln!(s, "  {:<24} {:.10} .. {:.10}", e.name, e.lower, u);
                    }
                    None => {
                        let _ = writeln!(s, "  {:<24} {:.10}", e.name, e.lower);
                    }
                }
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RunStats;
    use crate::numeric::ratio;

    fn result() -> CviResult {
        CviResult {
            lower: vec![0.443, 0.1],
            upper: Some(vec![0.4431, 0.2]),
            iterations: 12,
            converged: true,
            accepted_by: Some(Gsc::Optimistic),
            stats: RunStats { accepted_at: Some(10), ..RunStats::default() },
        }
    }

    #[test]
    fn json_uses_short_keys() {
        let names = vec!["A#1/enr1".to_string(), "A#1/enl1".to_string()];
        let r = Report::new(Algorithm::Cvi, &CviConfig::default(), &names, 0, &result());
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["schema"], REPORT_SCHEMA);
        assert_eq!(v["algorithm"], "cvi");
        for k in ["t", "t_i", "t_r", "H", "Q", "P"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        let back: Report = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn oracle_window() {
        let names = vec!["a".to_string(), "b".to_string()];
        let r = Report::new(Algorithm::Cvi, &CviConfig::default(), &names, 0, &result());
        assert!(r.clone().with_oracle(&ratio(44305, 100_000)).oracle.unwrap().within_epsilon);
        assert!(!r.clone().with_oracle(&ratio(44, 100)).oracle.unwrap().within_epsilon);
        assert!(!r.with_oracle(&ratio(4432, 10_000)).oracle.unwrap().within_epsilon);
    }
}
