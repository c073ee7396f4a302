use std::collections::{BTreeMap, VecDeque};

use nalgebra::DVector;

use super::search::{ExpansionRules, Problem};
use super::state::{rank_cmp, CandidateState};
use crate::error::{Error, Result};

pub const MAX_ORACLE_SYMBOLS: usize = 6;
pub const MAX_ORACLE_STATES: usize = 50_000;

/// An explicit finite state space with a transition relation.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteSpace {
    pub states: Vec<(String, DVector<f64>)>,
    /// Successor lists, indexed like `states`.
    pub transitions: Vec<Vec<usize>>,
    pub symbols: usize,
}

impl FiniteSpace {
    /// All strings over `alphabet` with length in `[min_len, max_len]`,
    /// crossed with a one-dimensional grid of continuous values. Moves are
    /// single edits (same grid value) and steps to an adjacent grid value
    /// (same string).
    pub fn strings_times_grid(alphabet: &[char], min_len: usize, max_len: usize, grid: &[f64]) -> Result<Self> {
        if alphabet.len() > MAX_ORACLE_SYMBOLS {
            return Err(Error::TooLarge(format!("oracle supports at most {MAX_ORACLE_SYMBOLS} symbols, got {}", alphabet.len())));
        }
        if grid.is_empty() {
            return Err(Error::Empty("continuous grid".into()));
        }
        let mut strings = Vec::new();
        let mut layer = vec![String::new()];
        for len in 0..=max_len {
            if len >= min_len {
                strings.extend(layer.iter().cloned());
            }
            if strings.len() * grid.len() > MAX_ORACLE_STATES {
                return Err(Error::TooLarge(format!("state space exceeds {MAX_ORACLE_STATES} states")));
            }
            layer = layer.iter().flat_map(|s| alphabet.iter().map(move |a| format!("{s}{a}"))).collect();
        }
        let index: BTreeMap<&str, usize> = strings.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let rules = ExpansionRules { alphabet: alphabet.to_vec(), min_len, max_len, step_sigma: 0.0, perturbations: 0 };
        let gl = grid.len();
        let mut states = Vec::with_capacity(strings.len() * gl);
        let mut transitions = Vec::with_capacity(strings.len() * gl);
        for s in &strings {
            let neighbours: Vec<usize> = rules.edit_neighbours(s).iter().map(|t| index[t.as_str()]).collect();
            for (k, c) in grid.iter().enumerate() {
                states.push((s.clone(), DVector::from_element(1, *c)));
                let mut succ: Vec<usize> = neighbours.iter().map(|n| n * gl + k).collect();
                if k > 0 {
                    succ.push(index[s.as_str()] * gl + k - 1);
                }
                if k + 1 < gl {
                    succ.push(index[s.as_str()] * gl + k + 1);
                }
                transitions.push(succ);
            }
        }
        Ok(Self { states, transitions, symbols: alphabet.len() })
    }

    pub fn position(&self, discrete: &str, continuous: &DVector<f64>) -> Option<usize> {
        self.states.iter().position(|(d, c)| d == discrete && c == continuous)
    }
}

/// Scores every state reachable from `start` and returns them ranked best
/// first under (distance, key).
pub fn dp_oracle(space: &FiniteSpace, start: usize, problem: &Problem<'_>) -> Result<Vec<CandidateState>> {
    if space.symbols > MAX_ORACLE_SYMBOLS || space.states.len() > MAX_ORACLE_STATES {
        return Err(Error::TooLarge("state space is not enumerable at oracle scale".into()));
    }
    if space.transitions.len() != space.states.len() {
        return Err(Error::Dimension("transition table does not match the state list".into()));
    }
    if start >= space.states.len() {
        return Err(Error::Dimension(format!("start index {start} out of range")));
    }
    let mut seen = vec![false; space.states.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut ranked = Vec::new();
    while let Some(i) = queue.pop_front() {
        let (d, c) = &space.states[i];
        ranked.push(problem.candidate(d, c.clone())?);
        for &j in &space.transitions[i] {
            if j >= seen.len() {
                return Err(Error::Dimension(format!("transition to missing state {j}")));
            }
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    ranked.sort_by(rank_cmp);
    Ok(ranked)
}
