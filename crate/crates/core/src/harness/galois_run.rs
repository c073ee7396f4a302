use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::report::Report;
use crate::error::Result;
use crate::galois::{Scenario, ScenarioRun};
use crate::util::quantile;

/// `galois run`: the scenario once per seed. Returns the report and each
/// seed's run (for trace files).
pub fn run_galois(config: &ExperimentConfig, scenario: &Scenario, seeds: &[u64]) -> Result<(Report, Vec<(u64, ScenarioRun)>)> {
    let mut report = Report::new(&format!("galois run {}", scenario.name), &config.hash(), seeds);
    let results: Vec<Result<ScenarioRun>> = seeds.par_iter().map(|&s| scenario.run(s)).collect();
    let mut runs = Vec::new();
    for (&seed, run) in seeds.iter().zip(results) {
        runs.push((seed, run?));
    }
    let (mut gaps, mut within, mut monotone) = (Vec::new(), 0, 0);
    for (seed, run) in &runs {
        let id = format!("galois/{}/seed{seed}", scenario.name);
        let best = run.result.best.score().unwrap_or(f64::NAN);
        report.push(&id, *seed, "fixpoint", "best_distance", best);
        report.push(&id, *seed, "fixpoint", "iterations", run.result.trace.len() as f64);
        report.push(&id, *seed, "fixpoint", "converged", f64::from(u8::from(run.result.converged)));
        let mono = run.result.trace.windows(2).all(|w| w[1].best_distance <= w[0].best_distance);
        monotone += usize::from(mono);
        if !mono {
            report.violate(format!("seed {seed}: best-distance trace increased"));
        }
        if let (Some(gap), Some(ok)) = (run.gap, run.within_epsilon) {
            report.push(&id, *seed, "fixpoint", "oracle_distance", run.oracle_best.as_ref().and_then(|b| b.score()).unwrap_or(f64::NAN));
            report.push(&id, *seed, "fixpoint", "gap", gap);
            report.push(&id, *seed, "fixpoint", "within_epsilon", f64::from(u8::from(ok)));
            gaps.push(gap);
            within += usize::from(ok);
        }
    }
    let n = runs.len().max(1) as f64;
    report.set("epsilon", scenario.epsilon);
    report.set("monotone_fraction", monotone as f64 / n);
    if !gaps.is_empty() {
        report.set("success_rate_at_epsilon", within as f64 / gaps.len() as f64);
        report.set("empirical_epsilon_at_95", quantile(&gaps, 0.95));
    }
    Ok((report, runs))
}
