use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::state::{rank_cmp, CandidateState, StateMap};
use crate::error::{Error, Result};
use crate::geometry::{Distribution, GroundMetricGraph};
use crate::util::derive_seed;

/// Everything needed to turn a raw state into a scored candidate.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub map: &'a dyn StateMap,
    pub target: &'a Distribution,
    pub graph: &'a GroundMetricGraph,
}

impl Problem<'_> {
    pub fn candidate(&self, discrete: &str, continuous: DVector<f64>) -> Result<CandidateState> {
        CandidateState::new(discrete, continuous, self.map)?.scored(self.target, self.graph)
    }
}

/// Expansion moves: single-symbol edits over `alphabet` that keep the
/// length within `[min_len, max_len]`, then `perturbations` Gaussian
/// perturbations of the continuous part with standard deviation `step_sigma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionRules {
    pub alphabet: Vec<char>,
    #[serde(default)]
    pub min_len: usize,
    pub max_len: usize,
    #[serde(default)]
    pub step_sigma: f64,
    #[serde(default)]
    pub perturbations: usize,
}

impl ExpansionRules {
    pub fn validate(&self) -> Result<()> {
        let distinct: BTreeSet<char> = self.alphabet.iter().copied().collect();
        if distinct.len() != self.alphabet.len() {
            return Err(Error::Config("alphabet has repeated symbols".into()));
        }
        if self.min_len > self.max_len {
            return Err(Error::Config(format!("min_len {} exceeds max_len {}", self.min_len, self.max_len)));
        }
        if !(self.step_sigma >= 0.0 && self.step_sigma.is_finite()) {
            return Err(Error::Config(format!("step_sigma {} must be finite and non-negative", self.step_sigma)));
        }
        Ok(())
    }

    /// Distinct single-edit neighbours of `s` in canonical order
    /// (deletions, substitutions, insertions), excluding `s` itself.
    pub fn edit_neighbours(&self, s: &str) -> Vec<String> {
        let chars: Vec<char> = s.chars().collect();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut push = |t: String| {
            if t != s && seen.insert(t.clone()) {
                out.push(t);
            }
        };
        if chars.len() > self.min_len {
            for i in 0..chars.len() {
                push(chars.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| *c).collect());
            }
        }
        for i in 0..chars.len() {
            for a in &self.alphabet {
                let mut t = chars.clone();
                t[i] = *a;
                push(t.into_iter().collect());
            }
        }
        if chars.len() < self.max_len {
            for i in 0..=chars.len() {
                for a in &self.alphabet {
                    let mut t = chars.clone();
                    t.insert(i, *a);
                    push(t.into_iter().collect());
                }
            }
        }
        out
    }
}

fn expand_one(state: &CandidateState, rules: &ExpansionRules, budget: usize, seed: u64, problem: &Problem<'_>) -> Result<Vec<CandidateState>> {
    let mut out = Vec::new();
    for t in rules.edit_neighbours(state.discrete()).into_iter().take(budget) {
        out.push(problem.candidate(&t, state.continuous().clone())?);
    }
    let room = budget - out.len();
    if !state.continuous().is_empty() && rules.step_sigma > 0.0 {
        let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("expand:{}", state.key())));
        for _ in 0..rules.perturbations.min(room) {
            let c = state.continuous().map(|x| {
                let z: f64 = StandardNormal.sample(&mut r);
                x + rules.step_sigma * z
            });
            out.push(problem.candidate(state.discrete(), c)?);
        }
    }
    Ok(out)
}

/// Applies up to `budget` moves to each frontier state and returns the
/// deduplicated union with the inputs, ordered by key. Perturbations draw
/// from a generator seeded by `(seed, state key)`, so the output does not
/// depend on how the work is scheduled across threads.
pub fn expand(frontier: &[CandidateState], rules: &ExpansionRules, budget: usize, seed: u64, problem: &Problem<'_>) -> Result<Vec<CandidateState>> {
    if budget == 0 {
        return Err(Error::Config("expansion budget must be at least 1".into()));
    }
    rules.validate()?;
    let children: Vec<Vec<CandidateState>> =
        frontier.par_iter().map(|s| expand_one(s, rules, budget, seed, problem)).collect::<Result<_>>()?;
    let mut merged = BTreeMap::new();
    for s in frontier.iter().cloned().chain(children.into_iter().flatten()) {
        let s = s.scored(problem.target, problem.graph)?;
        merged.entry(s.key()).or_insert(s);
    }
    Ok(merged.into_values().collect())
}

/// Keeps the `keep` minimal candidates under (distance, key). Unscored
/// candidates are scored first.
pub fn shrink(candidates: &[CandidateState], target: &Distribution, g: &GroundMetricGraph, keep: usize) -> Result<Vec<CandidateState>> {
    if keep == 0 {
        return Err(Error::Config("shrink width must be at least 1".into()));
    }
    let mut scored: Vec<CandidateState> = candidates.iter().cloned().map(|c| c.scored(target, g)).collect::<Result<_>>()?;
    scored.sort_by(rank_cmp);
    scored.dedup_by(|a, b| a.key() == b.key());
    scored.truncate(keep);
    Ok(scored)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub frontier_size: usize,
    pub best_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixpointResult {
    pub best: CandidateState,
    pub trace: Vec<TraceRow>,
    /// Whether the frontier stabilized (or reached distance zero) before `max_iter`.
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixpointConfig {
    pub keep: usize,
    pub budget: usize,
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Alternates expand and shrink from `start`. Stops when the frontier's key
/// set repeats or the best distance reaches zero (nothing can be smaller).
pub fn iterate_to_fixpoint(start: &CandidateState, problem: &Problem<'_>, rules: &ExpansionRules, cfg: &FixpointConfig) -> Result<FixpointResult> {
    if cfg.max_iter == 0 {
        return Err(Error::Config("max_iter must be at least 1".into()));
    }
    let mut frontier = vec![start.clone().scored(problem.target, problem.graph)?];
    let mut best = frontier[0].clone();
    let mut trace = Vec::new();
    for iteration in 1..=cfg.max_iter {
        let candidates = expand(&frontier, rules, cfg.budget, derive_seed(cfg.seed, &format!("iteration:{iteration}")), problem)?;
        let next = shrink(&candidates, problem.target, problem.graph, cfg.keep)?;
        if rank_cmp(&next[0], &best).is_lt() {
            best = next[0].clone();
        }
        let best_distance = best.score().unwrap_or(f64::INFINITY);
        trace.push(TraceRow { iteration, frontier_size: next.len(), best_distance });
        let same = next.len() == frontier.len() && next.iter().zip(&frontier).all(|(a, b)| a.key() == b.key());
        frontier = next;
        if same || best_distance == 0.0 {
            return Ok(FixpointResult { best, trace, converged: true });
        }
    }
    Ok(FixpointResult { best, trace, converged: false })
}

/// Writes `iteration,frontier_size,best_distance` rows.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Same rows to any writer.
pub fn write_trace<W: Write>(out: W, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
