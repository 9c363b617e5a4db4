//! End-to-end acceptance criteria. Each test prints one PASS/FAIL line to stderr.

mod common;

use std::fmt::Display;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_traits::{One, Signed, Zero};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cvi::benchgen::{gen_diagram, BenchSpec, MODEL_LEAF};
use cvi::diagram::{Model, Node, StringDiagram};
use cvi::engine::{cvi_run, exact_value, run_algorithm, Algorithm, CacheMode, CviConfig, CviResult, Gsc, UPPER_MARGIN};
use cvi::mdp::{mc_reachability_exact, ovi_solve, TargetWeight};
use cvi::numeric::{float_to_ratio, format_rational, ratio, ratio_to_f64, Rational};
use cvi::pareto::{AchievablePoint, CacheAnswer, ParetoCache};

use common::{
    brute_force, chain_values, leaf_points, par_map, random_leaf, reach_vector, shortcut_value, DiagramGen, LeafShape,
};

const GOLDEN: &str = include_str!("../../../models/golden.json");

fn verdict(n: u32, ok: bool, detail: impl Display) {
    let mut e = std::io::stderr().lock();
    let _ = writeln!(e, "criterion {n}: {} - {detail}", if ok { "PASS" } else { "FAIL" });
}

fn tol(x: f64) -> Rational {
    float_to_ratio(x)
}

/// `lower ≤ exact ≤ lower + eps` at every entrance.
fn within(lower: &[f64], exact: &[Rational], eps: f64) -> bool {
    lower.iter().zip(exact).all(|(&l, x)| {
        let l = float_to_ratio(l);
        l <= *x && *x <= l + tol(eps)
    })
}

#[test]
fn c1_golden_instance() {
    let model = Model::from_json(GOLDEN).unwrap();
    let d = &model.diagram;
    let w = &model.query.weights;
    // Two-variable loop: x = 7/10 + (3/10)(7/10) x from B's entrance, then half of it from A's.
    let loop_value = ratio(1, 2) * (ratio(7, 10) / (Rational::one() - ratio(21, 100)));
    let flat = d.flatten().unwrap();
    let oracle = brute_force(flat.mdp(), &flat.exits(), w, 16).unwrap();
    let exact = oracle[flat.entrances()[model.query.entrance]].clone();
    let mut ok = exact == ratio(35, 79) && loop_value == exact;
    let start = Instant::now();
    let mut detail = Vec::new();
    for alg in Algorithm::ALL {
        let res = run_algorithm(alg, d, w, &CviConfig::default()).unwrap();
        let v = res.lower[model.query.entrance];
        let good = res.converged && within(&[v], std::slice::from_ref(&exact), 1e-4);
        ok &= good;
        detail.push(format!("{alg}={v:.8}{}", if good { "" } else { "!" }));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(1);
    verdict(1, ok, format!("exact {} ({}), all modes in {elapsed:.2?}", format_rational(&exact), detail.join(" ")));
    assert!(ok);
}

struct Run {
    alg: Algorithm,
    res: CviResult,
}

struct Case {
    d: StringDiagram,
    w: Vec<Rational>,
    exact: Vec<Rational>,
    runs: Vec<Run>,
}

struct Sweep {
    cases: Vec<Case>,
    elapsed: Duration,
    /// Cases whose exact values were also confirmed by scheduler enumeration.
    brute_checked: usize,
    brute_mismatch: usize,
}

const SWEEP_SIZE: u64 = 200;

fn corpus() -> Vec<(StringDiagram, Vec<Rational>)> {
    (0..SWEEP_SIZE).map(|seed| DiagramGen::new(seed).diagram()).collect()
}

fn sweep() -> &'static Sweep {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let start = Instant::now();
        let cases = par_map(&corpus(), |(d, w)| {
            let exact = exact_value(d, w).unwrap();
            let runs = Algorithm::ALL
                .iter()
                .map(|&alg| Run { alg, res: run_algorithm(alg, d, w, &CviConfig::default()).unwrap() })
                .collect();
            Case { d: d.clone(), w: w.clone(), exact, runs }
        });
        let elapsed = start.elapsed();
        let checks = par_map(&cases, |c| {
            let flat = c.d.flatten().unwrap();
            brute_force(flat.mdp(), &flat.exits(), &c.w, 4096)
                .map(|v| flat.entrances().iter().map(|&i| v[i].clone()).collect::<Vec<_>>() == c.exact)
        });
        let brute_checked = checks.iter().flatten().count();
        let brute_mismatch = checks.iter().flatten().filter(|ok| !**ok).count();
        Sweep { cases, elapsed, brute_checked, brute_mismatch }
    })
}

#[test]
fn c2_soundness_sweep() {
    let s = sweep();
    let mut converged = 0;
    let mut violations = Vec::new();
    for (i, c) in s.cases.iter().enumerate() {
        for r in &c.runs {
            let upper_ok =
                r.res.upper.as_ref().is_none_or(|u| u.iter().zip(&c.exact).all(|(&u, x)| float_to_ratio(u) >= *x));
            if !upper_ok {
                violations.push(format!("case {i} {}: certified upper below exact", r.alg));
            }
            if r.res.converged {
                converged += 1;
                if !within(&r.res.lower, &c.exact, 1e-4) {
                    violations.push(format!(
                        "case {i} {}: lower {:?} vs exact {:?}",
                        r.alg,
                        r.res.lower,
                        c.exact.iter().map(ratio_to_f64).collect::<Vec<_>>()
                    ));
                }
            } else if r.res.lower.iter().zip(&c.exact).any(|(&l, x)| float_to_ratio(l) > *x) {
                violations.push(format!("case {i} {}: unconverged lower above exact", r.alg));
            }
        }
    }
    let runs = s.cases.len() * Algorithm::ALL.len();
    let ok = violations.is_empty() && s.brute_mismatch == 0 && s.elapsed < Duration::from_secs(120);
    verdict(
        2,
        ok,
        format!(
            "{} diagrams, {converged}/{runs} runs converged, {} violations, oracle confirmed by enumeration on {} ({} mismatches), {:.1?}",
            s.cases.len(),
            violations.len(),
            s.brute_checked,
            s.brute_mismatch,
            s.elapsed
        ),
    );
    assert!(ok, "{violations:#?}");
}

#[test]
fn c3_decomposition_equality() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shape = LeafShape { internal: 3, actions: 3, fanout: 3, plain_entrances: true, dead: 0.1 };
    let mut worst = Rational::zero();
    let mut cases = 0;
    while cases < 100 {
        let k = rng.gen_range(1..=2);
        let a = random_leaf(&mut rng, (1, 0, k, 0), &shape);
        let ro = rng.gen_range(1..=2);
        let b = random_leaf(&mut rng, (k, 0, ro, 0), &shape);
        let (Some(pa), Some(sb)) =
            (cvi::mdp::DmScheduler::enumerate(a.mdp(), 3), cvi::mdp::DmScheduler::enumerate(b.mdp(), 3))
        else {
            continue;
        };
        let wb: Vec<Rational> = b.exits().iter().map(|_| ratio(rng.gen_range(0..=5), 5)).collect();
        let a_exits = a.exits();
        let mut best = Rational::zero();
        for sa in &pa {
            let p = reach_vector(a.mdp(), sa, a.entrances()[0], &a_exits);
            for s in &sb {
                let v = chain_values(b.mdp(), s, &b.exits(), &wb);
                let total: Rational = p.iter().zip(b.entrances()).map(|(pj, e)| pj * &v[e]).sum();
                best = best.max(total);
            }
        }
        let d = StringDiagram::build(Node::seq(Node::leaf("A"), Node::leaf("B")), [("A".into(), a), ("B".into(), b)])
            .unwrap();
        let flat = exact_value(&d, &wb).unwrap();
        worst = worst.max((&flat[0] - &best).abs());
        cases += 1;
    }
    let ok = worst <= tol(1e-9);
    verdict(3, ok, format!("{cases} instances, max |flattened - bilinear| = {:e}", ratio_to_f64(&worst)));
    assert!(ok);
}

#[test]
fn c4_shortcut_equality() {
    let shape = LeafShape { internal: 3, actions: 2, fanout: 2, plain_entrances: true, dead: 0.1 };
    let mut worst = Rational::zero();
    let (mut cases, mut seed) = (0, 0u64);
    while cases < 50 {
        seed += 1;
        let mut g = DiagramGen::new(10_000 + seed);
        g.max_components = 3;
        g.shape = shape.clone();
        let (d, w) = g.diagram();
        let idx = d.index().unwrap();
        let Some(short) = shortcut_value(&d, &idx, &w, 1 << 14) else { continue };
        let exact = exact_value(&d, &w).unwrap();
        for (a, b) in short.iter().zip(&exact) {
            worst = worst.max((a - b).abs());
        }
        cases += 1;
    }
    let ok = worst <= tol(1e-12);
    verdict(
        4,
        ok,
        format!("{cases} instances ({seed} drawn), max |flattened - shortcut| = {:e}", ratio_to_f64(&worst)),
    );
    assert!(ok);
}

fn rand_weight(rng: &mut ChaCha8Rng, k: usize) -> Vec<Rational> {
    (0..k).map(|_| ratio(rng.gen_range(0..=8), 8)).collect()
}

#[test]
fn c5_cache_sandwich() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shape = LeafShape { internal: 4, actions: 2, fanout: 3, plain_entrances: false, dead: 0.1 };
    let eta = 1e-6;
    let (mut reads, mut updates, mut hit_checks) = (0usize, 0usize, 0usize);
    let mut faults = Vec::new();
    for leaf_no in 0..20 {
        let ri = rng.gen_range(1..=2);
        let ro = rng.gen_range(1..=3);
        let leaf = random_leaf(&mut rng, (ri, 0, ro, 0), &shape);
        let (m, exits, ents) = (leaf.mdp(), leaf.exits(), leaf.entrances());
        let Some(points) = leaf_points(&leaf, 1 << 12) else { continue };
        // Exact value at an entrance for weight w: best dot product over scheduler points.
        let exact = |w: &[Rational], i: usize| -> Rational {
            points.iter().map(|p| p[i].iter().zip(w).map(|(a, b)| a * b).sum::<Rational>()).max().unwrap()
        };
        let probes: Vec<Vec<Rational>> = (0..5).map(|_| rand_weight(&mut rng, ro)).collect();
        let mut last: Vec<Vec<(Rational, Rational)>> =
            vec![vec![(Rational::zero(), ratio(1_000, 1)); ri]; probes.len()];
        let mut cache = ParetoCache::new();
        for _ in 0..30 {
            let w = rand_weight(&mut rng, ro);
            if rng.gen_bool(0.5) {
                let wf: Vec<f64> = w.iter().map(ratio_to_f64).collect();
                let tw = TargetWeight::new(m, exits.clone(), wf).unwrap();
                let res = ovi_solve(m, &tw, eta).unwrap();
                let pts = mc_reachability_exact(m, &res.scheduler, &exits, &ents).unwrap();
                let uppers: Vec<Rational> = ents
                    .iter()
                    .map(|&i| {
                        if res.converged {
                            float_to_ratio((res.upper[i] + UPPER_MARGIN).min(1.0))
                        } else {
                            Rational::one()
                        }
                    })
                    .collect();
                let gap_small = pts.iter().zip(&uppers).all(|(p, u)| {
                    let val: Rational = p.iter().zip(&w).map(|(a, b)| a * b).sum();
                    u - val <= tol(eta)
                });
                let pts = pts.into_iter().map(|p| AchievablePoint::new(p).unwrap()).collect();
                cache.update("L", &w, &uppers, pts).unwrap();
                updates += 1;
                if gap_small {
                    hit_checks += 1;
                    if !matches!(cache.query("L", ri, &w, &tol(eta)).unwrap(), CacheAnswer::Hit(_)) {
                        faults.push(format!("leaf {leaf_no}: replayed weight missed"));
                    }
                }
            } else {
                let _ = cache.query("L", ri, &w, &tol(eta)).unwrap();
            }
            let Some(entry) = cache.get("L") else { continue };
            for (j, pw) in probes.iter().enumerate() {
                for i in 0..ri {
                    let (lo, hi) = (entry.under[i].read(pw), entry.over[i].read(pw));
                    let x = exact(pw, i);
                    reads += 1;
                    if !(lo <= x && x <= hi) {
                        faults.push(format!("leaf {leaf_no}: sandwich broken at entrance {i}"));
                    }
                    let (plo, phi) = &last[j][i];
                    if lo < *plo || hi > *phi {
                        faults.push(format!("leaf {leaf_no}: reads not monotone at entrance {i}"));
                    }
                    last[j][i] = (lo, hi);
                }
            }
        }
    }
    let ok = faults.is_empty() && hit_checks > 0;
    verdict(
        5,
        ok,
        format!("{updates} updates, {reads} sandwich reads, {hit_checks} replay hits checked, {} faults", faults.len()),
    );
    assert!(ok, "{faults:#?}");
}

#[test]
fn c6_example_geometry() {
    use cvi::mdp::MdpBuilder;
    let mut b = MdpBuilder::exact();
    let s = b.state("s");
    let (o1, o2, sink) = (b.state("o1"), b.state("o2"), b.state("lost"));
    b.action(s, "a", vec![(o1, ratio(2, 10)), (o2, ratio(7, 10)), (sink, ratio(1, 10))]);
    b.action(s, "b", vec![(o1, ratio(6, 10)), (o2, ratio(2, 10)), (sink, ratio(2, 10))]);
    let leaf = cvi::diagram::OpenMdp::new(b.build().unwrap(), vec![s], vec![], vec![o1, o2], vec![]).unwrap();
    let points = leaf_points(&leaf, 4).unwrap();
    let mut cache = ParetoCache::new();
    for w in [[ratio(1, 1), ratio(0, 1)], [ratio(0, 1), ratio(1, 1)]] {
        // Exact update: the best scheduler point and its value as the bound.
        let best = points.iter().max_by_key(|p| p[0].iter().zip(&w).map(|(a, b)| a * b).sum::<Rational>()).unwrap();
        let value: Rational = best[0].iter().zip(&w).map(|(a, b)| a * b).sum();
        cache.update("A", &w, &[value], vec![AchievablePoint::new(best[0].clone()).unwrap()]).unwrap();
    }
    let half = [ratio(1, 2), ratio(1, 2)];
    // Dot-product enumeration over the two realizable points.
    let expect = points.iter().map(|p| p[0].iter().zip(&half).map(|(a, b)| a * b).sum::<Rational>()).max().unwrap();
    let e = cache.get("A").unwrap();
    let (lo, hi) = (e.under[0].read(&half), e.over[0].read(&half));
    let ok = expect == ratio(45, 100) && (&lo - &expect).abs() <= tol(1e-9) && hi >= expect;
    verdict(6, ok, format!("under {} over {} at (1/2, 1/2)", format_rational(&lo), format_rational(&hi)));
    assert!(ok);
}

#[test]
fn c7_gsc_soundness() {
    let s = sweep();
    let (mut opt, mut bu) = (0, 0);
    let mut violations = Vec::new();
    for (i, c) in s.cases.iter().enumerate() {
        for r in &c.runs {
            match r.res.accepted_by {
                Some(Gsc::Optimistic) => opt += 1,
                Some(Gsc::BottomUp) => bu += 1,
                None => continue,
            }
            let bad = r.res.lower.iter().zip(&c.exact).any(|(&l, x)| *x > float_to_ratio(l) + tol(1e-4));
            if bad {
                violations.push(format!("case {i} {}", r.alg));
            }
        }
    }
    let ok = violations.is_empty() && opt > 0 && bu > 0;
    verdict(7, ok, format!("{opt} optimistic and {bu} bottom-up acceptances, {} violations", violations.len()));
    assert!(ok, "{violations:#?}");
}

/// Whether some strongly connected set of flattened states spans two components.
fn cycle_through_wiring(d: &StringDiagram) -> bool {
    let flat = d.flatten().unwrap();
    let m = flat.mdp();
    let mut g = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..m.num_states()).map(|_| g.add_node(())).collect();
    for s in 0..m.num_states() {
        for a in m.actions(s) {
            for &t in m.successors(a) {
                g.add_edge(nodes[s], nodes[t as usize], ());
            }
        }
    }
    let owner = |s: usize| m.state_name(s).split('/').next().unwrap().to_string();
    tarjan_scc(&g).iter().any(|scc| scc.iter().any(|n| owner(n.index()) != owner(scc[0].index())))
}

#[test]
fn c8_benchmark_shapes() {
    let mut faults = Vec::new();
    for n in 1..=4 {
        for fam in ["rooms", "birooms"] {
            let b = gen_diagram(&format!("{fam}:{n}:rms").parse().unwrap()).unwrap();
            let models = b.diagram.leaf_table().keys().filter(|k| !b.meta.connectors.contains(k)).count();
            if b.meta.occurrences != n * n || models != 1 {
                faults.push(format!("{fam}:{n}: {} occurrences, {models} model leaves", b.meta.occurrences));
            }
        }
    }
    for n in [1, 3, 10] {
        for fam in ["chains", "chainsloop"] {
            let b = gen_diagram(&format!("{fam}:{n}:dice2:rounds=3").parse().unwrap()).unwrap();
            if b.meta.occurrences != n || !b.diagram.leaf_table().contains_key(MODEL_LEAF) {
                faults.push(format!("{fam}:{n}: {} occurrences", b.meta.occurrences));
            }
        }
    }
    let looped = gen_diagram(&"chainsloop:10:dice2".parse().unwrap()).unwrap();
    let straight = gen_diagram(&"chains:10:dice2".parse().unwrap()).unwrap();
    if !cycle_through_wiring(&looped.diagram) || cycle_through_wiring(&straight.diagram) {
        faults.push("wiring cycle check".into());
    }
    let mut timings = Vec::new();
    for spec in ["rooms:3:rms", "chainsloop:10:dice2"] {
        let spec: BenchSpec = spec.parse().unwrap();
        let b = gen_diagram(&spec).unwrap();
        let exact = exact_value(&b.diagram, &b.weights).unwrap();
        for alg in Algorithm::ALL {
            let start = Instant::now();
            let res = run_algorithm(alg, &b.diagram, &b.weights, &CviConfig::default()).unwrap();
            let t = start.elapsed();
            timings.push(format!("{spec} {alg} {t:.1?}"));
            if !res.converged || t > Duration::from_secs(60) || !within(&res.lower, &exact, 1e-4) {
                faults.push(format!(
                    "{spec} {alg}: converged={} in {t:.1?}, lower {:?}, exact {:?}",
                    res.converged,
                    res.lower,
                    exact.iter().map(ratio_to_f64).collect::<Vec<_>>()
                ));
            }
        }
    }
    let ok = faults.is_empty();
    verdict(8, ok, format!("counts, wiring cycle and presets; {}", timings.join(", ")));
    assert!(ok, "{faults:#?}");
}

#[test]
fn c9_convergence_without_stopping() {
    let cfg = CviConfig { stopping: false, cache: CacheMode::None, ..CviConfig::default() };
    let cases = corpus();
    let gaps = par_map(&cases, |(d, w)| {
        let exact = exact_value(d, w).unwrap();
        let res = cvi_run(d, w, &cfg).unwrap();
        res.lower.iter().zip(&exact).map(|(&l, x)| ratio_to_f64(&(x - float_to_ratio(l)).abs())).fold(0.0, f64::max)
    });
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    let failing = gaps.iter().filter(|&&g| g >= 1e-6).count();
    let ok = failing == 0;
    verdict(9, ok, format!("{} diagrams, worst gap {worst:e}, {failing} at or above 1e-6", cases.len()));
    assert!(ok);
}
