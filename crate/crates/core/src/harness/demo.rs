use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::Report;
use crate::error::{Error, Result};
use crate::hypervector::{aggregator_search, ConceptDictionary, ConceptKind, SearchConfig, SearchHit, DEFAULT_R};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactSpec {
    pub entity: String,
    pub pairs: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedHit {
    pub memory_index: usize,
    /// Name the winning path must end on; any path (or none) when absent.
    #[serde(default)]
    pub cleaned: Option<String>,
}

/// A multi-hop retrieval scenario over a concept dictionary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypervectorScenario {
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default)]
    pub ell: usize,
    pub entities: Vec<String>,
    pub roles: Vec<String>,
    pub facts: Vec<FactSpec>,
    pub query: Vec<String>,
    pub expected: ExpectedHit,
    #[serde(default)]
    pub search: SearchConfig,
    /// Fraction of seeds on which the expected hit must rank first.
    #[serde(default = "default_min_success")]
    pub min_success: f64,
}

fn default_r() -> usize {
    DEFAULT_R
}

fn default_min_success() -> f64 {
    0.9
}

const BUILTIN: &str = include_str!("../../scenarios/chinaglia.json");

impl HypervectorScenario {
    pub fn builtin() -> Result<Self> {
        Self::from_json(BUILTIN)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Builds the dictionary for `seed` and runs the search.
    pub fn run(&self, seed: u64) -> Result<Vec<SearchHit>> {
        let mut dict = ConceptDictionary::new(seed, self.ell, self.r)?;
        for e in &self.entities {
            dict.register(e, ConceptKind::Entity)?;
        }
        for r in &self.roles {
            dict.register(r, ConceptKind::Role)?;
        }
        let memory = self
            .facts
            .iter()
            .map(|f| {
                let pairs: Vec<(&str, &str)> = f.pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
                dict.encode_fact(&f.entity, &pairs)
            })
            .collect::<Result<Vec<_>>>()?;
        if self.query.is_empty() {
            return Err(Error::Empty("query".into()));
        }
        let names: Vec<&str> = self.query.iter().map(String::as_str).collect();
        let query = dict.bundle_names(&names)?;
        aggregator_search(&query, &memory, &dict, &self.search)
    }

    pub fn is_success(&self, hits: &[SearchHit]) -> bool {
        let Some(top) = hits.first() else { return false };
        top.memory_index == self.expected.memory_index
            && self.expected.cleaned.as_ref().is_none_or(|c| top.path.last().is_some_and(|s| &s.cleaned == c))
    }
}

/// Human-readable ranking with unbind traces.
pub fn format_ranking(hits: &[SearchHit]) -> Vec<String> {
    hits.iter()
        .enumerate()
        .map(|(rank, h)| {
            let trace: Vec<String> =
                h.path.iter().map(|s| format!("#{} ⊙ {} ⊙ {} → {} ({:.3})", s.memory_index, s.keys[0], s.keys[1], s.cleaned, s.cleanup)).collect();
            let via = if trace.is_empty() { "direct match".to_string() } else { trace.join("; ") };
            format!("{:>2}. memory #{} score {:.4} depth {}: {}", rank + 1, h.memory_index, h.score, h.depth, via)
        })
        .collect()
}

/// `demo chinaglia`: runs the scenario on every seed and records whether
/// the expected hit ranked first.
pub fn demo_chinaglia(config: &ExperimentConfig, scenario: &HypervectorScenario, seeds: &[u64]) -> Result<Report> {
    let mut report = Report::new("demo chinaglia", &config.hash(), seeds);
    if scenario.facts.is_empty() {
        report.violate("memory is empty: nothing can be retrieved");
    }
    let results: Vec<Result<Vec<SearchHit>>> = seeds.par_iter().map(|&s| scenario.run(s)).collect();
    let mut successes = 0;
    for (&seed, hits) in seeds.iter().zip(results) {
        let hits = hits?;
        let ok = scenario.is_success(&hits);
        successes += usize::from(ok);
        let id = format!("chinaglia/seed{seed}");
        report.push(&id, seed, "aggregator", "success", f64::from(u8::from(ok)));
        report.push(&id, seed, "aggregator", "top_score", hits.first().map_or(f64::NAN, |h| h.score));
        let rank = hits.iter().position(|h| h.memory_index == scenario.expected.memory_index);
        report.push(&id, seed, "aggregator", "expected_rank", rank.map_or(f64::NAN, |r| (r + 1) as f64));
        if seed == seeds[0] {
            report.set("ranking_first_seed", format_ranking(&hits));
        }
    }
    let fraction = if seeds.is_empty() { 0.0 } else { successes as f64 / seeds.len() as f64 };
    report.set("successes", successes);
    report.set("success_fraction", fraction);
    if seeds.is_empty() || fraction < scenario.min_success {
        report.violate(format!("expected hit ranked first on {successes}/{} seeds", seeds.len()));
    }
    Ok(report)
}
