//! Browser demo: solve models and generated benchmarks from a static page.
//!
//! Every export takes and returns JSON text. The plain functions below do the
//! work and are tested natively; the `wasm_bindgen` wrappers only turn errors
//! into JS exceptions.

use cvi::benchgen::{gen_diagram, BenchSpec};
use cvi::diagram::Model;
use cvi::engine::{exact_value, run_algorithm, Algorithm, CviConfig, Report};
use wasm_bindgen::prelude::*;

/// The two-component example that ships with the repository.
pub const GOLDEN: &str = include_str!("../../../models/golden.json");

/// Oracle runs are refused above this many flattened states.
pub const ORACLE_STATE_LIMIT: usize = 2_000;

pub type DemoResult<T> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn report(model: &Model, alg: Algorithm, epsilon: Option<f64>, oracle: bool) -> DemoResult<Report> {
    let epsilon = epsilon.or(model.query.epsilon).unwrap_or(1e-4);
    let defaults = CviConfig::default();
    let base = CviConfig { epsilon, eta: defaults.eta.min(epsilon), ..defaults };
    let cfg = alg.configure(base.clone());
    cfg.validate().map_err(err)?;
    let (d, idx, w) = (&model.diagram, &model.index, &model.query.weights);
    let res = run_algorithm(alg, d, w, &base).map_err(err)?;
    let names = idx.global_entrance_names(d);
    let mut out = Report::new(alg, &cfg, &names, model.query.entrance, &res);
    if oracle {
        let states = d.flatten().map_err(err)?.mdp().num_states();
        if states > ORACLE_STATE_LIMIT {
            return Err(format!("exact oracle skipped: {states} flattened states (limit {ORACLE_STATE_LIMIT})"));
        }
        out = out.with_oracle(&exact_value(d, w).map_err(err)?[model.query.entrance]);
    }
    Ok(out)
}

/// Runs one algorithm on a model file; returns the JSON report.
pub fn solve_json(model: &str, algorithm: &str, epsilon: Option<f64>, oracle: bool) -> DemoResult<String> {
    let model = Model::from_json(model).map_err(err)?;
    let alg: Algorithm = algorithm.parse().map_err(err)?;
    serde_json::to_string(&report(&model, alg, epsilon, oracle)?).map_err(err)
}

/// Runs every algorithm on a model file; returns a JSON array of reports.
pub fn compare_json(model: &str, epsilon: Option<f64>, oracle: bool) -> DemoResult<String> {
    let model = Model::from_json(model).map_err(err)?;
    let reports =
        Algorithm::ALL.into_iter().map(|alg| report(&model, alg, epsilon, oracle)).collect::<DemoResult<Vec<_>>>()?;
    serde_json::to_string(&reports).map_err(err)
}

/// A generated benchmark as a model file.
pub fn generate_json(spec: &str, seed: Option<u64>) -> DemoResult<String> {
    let mut spec: BenchSpec = spec.parse().map_err(err)?;
    if let Some(s) = seed {
        spec = spec.with_seed(s);
    }
    Ok(gen_diagram(&spec).map_err(err)?.model_file().to_json())
}

#[wasm_bindgen]
pub fn solve(model: &str, algorithm: &str, epsilon: Option<f64>, oracle: bool) -> Result<String, JsError> {
    solve_json(model, algorithm, epsilon, oracle).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compare(model: &str, epsilon: Option<f64>, oracle: bool) -> Result<String, JsError> {
    compare_json(model, epsilon, oracle).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn generate(spec: &str, seed: Option<u32>) -> Result<String, JsError> {
    generate_json(spec, seed.map(u64::from)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn golden() -> String {
    GOLDEN.to_string()
}

#[wasm_bindgen]
pub fn algorithms() -> String {
    serde_json::to_string(&Algorithm::ALL.map(Algorithm::name)).expect("names serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn golden_solves_with_oracle() {
        let r: Value = serde_json::from_str(&solve_json(GOLDEN, "ocvi-exact", None, true).unwrap()).unwrap();
        assert_eq!(r["converged"], true);
        assert_eq!(r["oracle"]["exact"], "35/79");
        assert_eq!(r["oracle"]["within_epsilon"], true);
    }

    #[test]
    fn compare_covers_every_algorithm() {
        let r: Value = serde_json::from_str(&compare_json(GOLDEN, Some(1e-6), false).unwrap()).unwrap();
        let names: Vec<&str> = r.as_array().unwrap().iter().map(|x| x["algorithm"].as_str().unwrap()).collect();
        assert_eq!(names, Algorithm::ALL.map(Algorithm::name));
        for x in r.as_array().unwrap() {
            assert!((x["value"].as_f64().unwrap() - 35.0 / 79.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn generated_models_round_trip() {
        let text = generate_json("chains:3:dice2", Some(3)).unwrap();
        assert_eq!(text, generate_json("chains:3:dice2", Some(3)).unwrap());
        let r: Value = serde_json::from_str(&solve_json(&text, "symb", None, false).unwrap()).unwrap();
        assert_eq!(r["converged"], true);
    }

    #[test]
    fn errors_are_messages() {
        assert!(solve_json("{", "mono", None, false).is_err());
        assert!(solve_json(GOLDEN, "magic", None, false).unwrap_err().contains("magic"));
        assert!(generate_json("rooms:0:rms", None).is_err());
    }

    #[test]
    fn oracle_refuses_large_models() {
        let text = generate_json("rooms:1:rmb", None).unwrap();
        assert!(solve_json(&text, "mono", None, true).unwrap_err().contains("oracle"));
    }
}
