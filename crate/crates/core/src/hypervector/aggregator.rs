use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::algebra::{bind, similarity, Hypervector, SimilarityMode};
use super::dictionary::ConceptDictionary;
use crate::error::{Error, Result};

/// Search settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub beam: usize,
    pub depth: usize,
    /// Minimum cosine between an unbinding residual and its cleaned-up
    /// dictionary entry for the step to count.
    pub cleanup_threshold: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { beam: 4, depth: 2, cleanup_threshold: 0.5 }
    }
}

/// One partial unbinding: `memory[memory_index] ⊙ keys[0] ⊙ keys[1]`
/// cleaned up to the dictionary entry `cleaned`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnbindStep {
    pub memory_index: usize,
    pub keys: [String; 2],
    pub cleaned: String,
    pub cleanup: f64,
}

/// Best evidence found for one memory item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub memory_index: usize,
    pub score: f64,
    /// 0 when the raw similarity is the best score.
    pub depth: usize,
    pub path: Vec<UnbindStep>,
}

#[derive(Clone, Debug)]
struct Partial {
    memory_index: usize,
    score: f64,
    path: Vec<UnbindStep>,
    /// Names used as unbinding keys that did not come from a cleanup.
    query_keys: Vec<String>,
}

fn order(a: &Partial, b: &Partial) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.path.len().cmp(&b.path.len()))
        .then(a.memory_index.cmp(&b.memory_index))
        .then_with(|| path_key(&a.path).cmp(&path_key(&b.path)))
}

fn path_key(p: &[UnbindStep]) -> Vec<(usize, &str, &str, &str)> {
    p.iter().map(|s| (s.memory_index, s.keys[0].as_str(), s.keys[1].as_str(), s.cleaned.as_str())).collect()
}

/// Best cleanup of a residual against every dictionary entry; ties go to
/// the earlier registered name.
fn cleanup<'d>(residual: &Hypervector, dict: &'d ConceptDictionary) -> Result<(&'d str, f64)> {
    let mut best: Option<(&str, f64)> = None;
    for name in dict.names() {
        let s = similarity(residual, dict.get(name)?, SimilarityMode::RandomBlockCos)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((name, s));
        }
    }
    best.ok_or_else(|| Error::Empty("dictionary is empty".into()))
}

/// Beam search over partial unbindings of the memory.
///
/// Level 0 scores every memory item by raw similarity to the query. Level 1
/// unbinds each memory item by every pair of dictionary entries and cleans
/// the residual up against the dictionary; a step whose cleanup cosine
/// reaches the threshold scores `cleanup × sim(query, bundle(keys))`, where
/// `keys` are the unbinding names collected along the path. Deeper levels
/// hop from a surviving step's cleaned-up entry `c`: memory item `j` is
/// unbound by `c` and a further dictionary entry `b`, and `b` joins the
/// keys. Only the top `beam` steps of each level are expanded.
///
/// Each memory item's final score is the maximum of its raw similarity and
/// its best path score. Results are sorted by score, then shallower depth,
/// then memory index, and do not depend on the rayon thread count.
pub fn aggregator_search(
    query: &Hypervector,
    memory: &[Hypervector],
    dict: &ConceptDictionary,
    cfg: &SearchConfig,
) -> Result<Vec<SearchHit>> {
    if memory.is_empty() {
        return Ok(Vec::new());
    }
    if cfg.beam == 0 {
        return Err(Error::Config("beam must be at least 1".into()));
    }
    let mut best: Vec<SearchHit> = memory
        .iter()
        .enumerate()
        .map(|(j, m)| {
            Ok(SearchHit { memory_index: j, score: similarity(query, m, SimilarityMode::RandomBlockCos)?, depth: 0, path: vec![] })
        })
        .collect::<Result<_>>()?;

    let names = dict.names();
    let key_score = |keys: &[String]| -> Result<f64> {
        let mut sorted: Vec<&str> = keys.iter().map(String::as_str).collect();
        sorted.sort_unstable();
        sorted.dedup();
        similarity(query, &dict.bundle_names(&sorted)?, SimilarityMode::RandomBlockCos)
    };

    let mut frontier: Vec<Partial> = Vec::new();
    for level in 1..=cfg.depth {
        // (source partial, memory index, first key, second key)
        let jobs: Vec<(Option<usize>, usize, usize, usize)> = if level == 1 {
            (0..memory.len())
                .flat_map(|j| (0..names.len()).flat_map(move |a| ((a + 1)..names.len()).map(move |b| (None, j, a, b))))
                .collect()
        } else {
            let mut v = Vec::new();
            for (s, part) in frontier.iter().enumerate() {
                let c = names.iter().position(|n| *n == part.path.last().expect("non-empty path").cleaned).expect("registered");
                for j in 0..memory.len() {
                    for b in 0..names.len() {
                        if b != c {
                            v.push((Some(s), j, c, b));
                        }
                    }
                }
            }
            v
        };
        let produced: Vec<Option<Partial>> = jobs
            .par_iter()
            .map(|&(src, j, a, b)| -> Result<Option<Partial>> {
                let residual = bind(&bind(&memory[j], dict.get(&names[a])?)?, dict.get(&names[b])?)?;
                let (cleaned, cos) = cleanup(&residual, dict)?;
                if cos < cfg.cleanup_threshold || cleaned == names[a] || cleaned == names[b] {
                    return Ok(None);
                }
                let (mut path, mut keys) = match src {
                    None => (Vec::new(), vec![names[a].clone()]),
                    Some(s) => (frontier[s].path.clone(), frontier[s].query_keys.clone()),
                };
                keys.push(names[b].clone());
                path.push(UnbindStep { memory_index: j, keys: [names[a].clone(), names[b].clone()], cleaned: cleaned.to_string(), cleanup: cos });
                let score = cos * key_score(&keys)?;
                Ok(Some(Partial { memory_index: j, score, path, query_keys: keys }))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut level_parts: Vec<Partial> = produced.into_iter().flatten().collect();
        level_parts.sort_by(order);
        for p in &level_parts {
            let hit = &mut best[p.memory_index];
            if p.score > hit.score {
                *hit = SearchHit { memory_index: p.memory_index, score: p.score, depth: level, path: p.path.clone() };
            }
        }
        level_parts.truncate(cfg.beam);
        if level_parts.is_empty() {
            break;
        }
        frontier = level_parts;
    }
    best.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.depth.cmp(&b.depth)).then(a.memory_index.cmp(&b.memory_index)));
    Ok(best)
}
