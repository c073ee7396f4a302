use std::path::Path;

use actpc_geom::galois::Scenario;
use actpc_geom::geometry::{w2_exact, Distribution, GroundMetricGraph};
use actpc_geom::harness::*;
use actpc_geom::Error;

fn scenario_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

#[test]
fn censored_summary_examples() {
    let s = censored_summary(&[Some(3.0), Some(1.0), Some(2.0), None, Some(4.0)]);
    assert_eq!((s.runs, s.censored), (5, 1));
    assert_eq!(s.median, Some(3.0));
    assert_eq!(s.q1, Some(2.0));
    assert_eq!(s.q3, Some(4.0));
    assert_eq!(s.iqr, Some(2.0));
    // Two censored runs out of five push the upper quartile past the budget.
    let late = censored_summary(&[Some(1.0), Some(2.0), Some(3.0), None, None]);
    assert_eq!(late.median, Some(3.0));
    assert_eq!((late.q3, late.iqr), (None, None));

    let all = censored_summary(&[None, None, Some(1.0)]);
    assert_eq!(all.median, None);
    let none = censored_summary(&[Some(1.0), Some(3.0)]);
    assert_eq!(none.median, Some(2.0));
    assert_eq!(none.iqr, Some(1.0));
    assert_eq!(censored_summary(&[]).median, None);
}

#[test]
fn stats_helpers() {
    assert_eq!(histogram(&[-1.0, 0.1, 0.5, 0.99, 2.0], 0.0, 1.0, 2), vec![2, 3]);
    let x = [1.0, 2.0, 3.0];
    assert!((correlation(&x, &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
    assert!((correlation(&x, &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    assert_eq!(correlation(&x, &[1.0, 1.0, 1.0]), None);
}

#[test]
fn seed_range_parsing() {
    let r: SeedRange = "3..7".parse().unwrap();
    assert_eq!(r.seeds(), vec![3, 4, 5, 6]);
    assert!("7..3".parse::<SeedRange>().is_err());
    assert!("5".parse::<SeedRange>().is_err());
    assert!("a..b".parse::<SeedRange>().is_err());
    assert_eq!(ExperimentConfig::default().seeds(), DEFAULT_SEEDS.seeds());
}

#[test]
fn config_rejects_unknown_keys_and_hashes_content() {
    assert!(matches!(ExperimentConfig::from_json(r#"{"bench": {"iterations": 5, "typo": 1}}"#), Err(Error::Json(_))));
    assert!(ExperimentConfig::from_json(r#"{"nonsense": true}"#).is_err());
    let a = ExperimentConfig::from_json(r#"{"bench": {"iterations": 5}}"#).unwrap();
    assert_eq!(a.bench.iterations, 5);
    assert_eq!(a.bench.hidden, BenchConfig::default().hidden);
    let b = ExperimentConfig::from_json(r#"{"bench": {"iterations": 6}}"#).unwrap();
    assert_ne!(a.hash(), b.hash());
    assert_eq!(a.hash(), ExperimentConfig::from_json(r#"{ "bench" : { "iterations" : 5 } }"#).unwrap().hash());
}

#[test]
fn report_writes_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = Report::new("test", "abc", &[0, 1]);
    r.push("run/0", 0, "v", "m", 0.1);
    r.push("run/1", 1, "v", "m", 2.5);
    r.set("answer", 42);
    r.write(dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("run_id,seed,variant,metric,value"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[..4], ["run/0", "0", "v", "m"]);
    assert_eq!(row[4].parse::<f64>().unwrap(), 0.1);
    let back: Report = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(back, r);
    assert!(back.ok());
}

#[test]
fn lipschitz_constant_family_has_zero_ratios() {
    let cfg = LipschitzConfig { constant_family: true, pairs: 200, ..Default::default() };
    let o = lipschitz_probe(&cfg, 0).unwrap();
    assert_eq!(o.max_ratio, 0.0);
    assert_eq!(o.violation_fraction, 0.0);
}

#[test]
fn lipschitz_bound_is_tight_and_detects_understatement() {
    let cfg = LipschitzConfig { pairs: 2000, ..Default::default() };
    let o = lipschitz_probe(&cfg, 1).unwrap();
    assert_eq!(o.violation_fraction, 0.0);
    assert!(o.max_ratio > 0.5 * o.analytic_l, "bound unexpectedly loose: {} vs {}", o.max_ratio, o.analytic_l);
    let under = lipschitz_probe(&LipschitzConfig { asserted_l: Some(0.5 * o.analytic_l), ..cfg }, 1).unwrap();
    assert!(under.violation_fraction > 0.0);
}

#[test]
fn analytic_lipschitz_on_a_path() {
    // Path of 3 nodes, target node 1: A = 1, B = (0 + 1) / 2.
    let g = GroundMetricGraph::path(3).unwrap();
    let expected = 0.5 / (8.0 * 0.5_f64.sqrt());
    assert!((analytic_lipschitz(&g, 1) - expected).abs() < 1e-15);
    let p = one_vs_rest(0.0, 3).unwrap();
    assert_eq!(p, Distribution::uniform(3).unwrap());
}

#[test]
fn descent_started_at_the_optimum_takes_no_steps() {
    let cfg = ConvexityConfig::default();
    let problem = LocationProblem::new(&cfg, 3.0, 0.0).unwrap();
    assert_eq!(problem.distance(3.0).unwrap(), 0.0);
    let run = problem.descend(3.0, cfg.eta, cfg.max_steps, 0.0, cfg.tolerance).unwrap();
    assert_eq!(run.steps, 0);
    assert!(run.reached_optimum && run.monotone);
}

#[test]
fn unimodal_descent_reaches_the_target() {
    let out = convexity_probe(&ConvexityConfig { starts: 10, ..Default::default() }, 4, 0.0).unwrap();
    assert_eq!(out.monotone_fraction, 1.0);
    assert!(out.reached_fraction >= 0.9);
    for r in &out.runs {
        assert!((r.end - out.center).abs() < 0.05, "{r:?}");
    }
}

#[test]
fn hypervector_scenarios() {
    let main = HypervectorScenario::from_file(&scenario_path("chinaglia.json")).unwrap();
    assert_eq!(main, HypervectorScenario::builtin().unwrap());
    let cfg = ExperimentConfig::default();
    let seeds: Vec<u64> = (0..5).collect();
    let r = demo_chinaglia(&cfg, &main, &seeds).unwrap();
    assert!(r.ok(), "{:?}", r.violations);
    assert!(r.summary.contains_key("ranking_first_seed"));

    let italy = HypervectorScenario::from_file(&scenario_path("chinaglia_italy_only.json")).unwrap();
    let r = demo_chinaglia(&cfg, &italy, &seeds).unwrap();
    assert!(r.ok(), "{:?}", r.violations);

    let empty = HypervectorScenario::from_file(&scenario_path("chinaglia_empty_memory.json")).unwrap();
    assert!(empty.run(0).unwrap().is_empty());
    let r = demo_chinaglia(&cfg, &empty, &seeds).unwrap();
    assert!(!r.ok());

    let mut wrong = main.clone();
    wrong.expected.memory_index = 2;
    assert!(!demo_chinaglia(&cfg, &wrong, &seeds).unwrap().ok());
    assert!(HypervectorScenario::from_json(r#"{"entities": [], "extra": 1}"#).is_err());
}

#[test]
fn galois_scenario_runs_from_file() {
    let sc = Scenario::from_file(&scenario_path("gaussian_chain.json")).unwrap();
    let seeds: Vec<u64> = (0..4).collect();
    let (report, runs) = run_galois(&ExperimentConfig::default(), &sc, &seeds).unwrap();
    assert!(report.ok(), "{:?}", report.violations);
    assert_eq!(runs.len(), 4);
    assert_eq!(report.summary["monotone_fraction"], 1.0);
    assert!(report.summary.contains_key("empirical_epsilon_at_95"));
}

#[test]
fn bench_target_puts_mass_at_the_far_pair() {
    let g = GroundMetricGraph::path(5).unwrap();
    let t = bench_target(&g, TaskFamily::Bimodal, 0.35).unwrap();
    let w = t.weights();
    assert!((w[0] - w[4]).abs() < 1e-15);
    assert!(w[0] > w[2]);
    let u = bench_target(&g, TaskFamily::Unimodal, 0.35).unwrap();
    assert!(u.weights()[0] > u.weights()[4]);
    assert!(w2_exact(&t, &u, &g).unwrap().0 > 0.0);
}

#[test]
fn bench_is_self_consistent_and_deterministic() {
    let mut cfg = ExperimentConfig::default();
    cfg.bench.iterations = 60;
    let a = run_bench_compare(&cfg, &[0, 1]).unwrap();
    assert_eq!(a.summary["self_consistent"], true);
    assert!(a.ok(), "{:?}", a.violations);
    let b = run_bench_compare(&cfg, &[1, 0]).unwrap();
    // Rows come back in seed order regardless of scheduling.
    assert_eq!(a.rows, b.rows);
    for v in VARIANTS {
        assert_eq!(a.rows_for(v, "initial_w2").count(), 2);
    }
    let first: Vec<f64> = VARIANTS.iter().map(|v| a.rows_for(v, "initial_w2").next().unwrap().value).collect();
    assert!(first.iter().all(|x| x.to_bits() == first[0].to_bits()), "variants must share initialization");
}

#[test]
fn shipped_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join("quick.json");
    let cfg = ExperimentConfig::from_file(&path).unwrap();
    assert_eq!(cfg.seeds(), (0..5).collect::<Vec<u64>>());
    assert_eq!(cfg.bench.task, TaskFamily::Unimodal);
}
