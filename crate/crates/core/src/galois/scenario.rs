use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::oracle::{dp_oracle, FiniteSpace};
use super::search::{iterate_to_fixpoint, ExpansionRules, FixpointConfig, FixpointResult, Problem};
use super::state::{AnchorMap, CandidateState, GaussianChainMap, HybridMetricSpec, StateMap, TrigramReadoutMap};
use crate::error::{Error, Result};
use crate::geometry::{Distribution, GroundMetricGraph};
use crate::util::rng;

pub const DEFAULT_EPSILON: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub discrete: String,
    #[serde(default)]
    pub continuous: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    TrigramReadout { support: usize, continuous_dim: usize, seed: u64 },
    GaussianChain { support: usize, width: f64 },
    Anchor {
        anchors: Vec<StateSpec>,
        metric: HybridMetricSpec,
        temperature: f64,
        #[serde(default)]
        auto_rescale: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Path { n: usize },
    Explicit { omega: Vec<Vec<f64>>, cost: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Weights { weights: Vec<f64> },
    /// The distribution induced by a state under the scenario's map.
    State { discrete: String, continuous: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub grid: Vec<f64>,
}

/// A complete, JSON-loadable expand/shrink problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub map: MapSpec,
    pub graph: GraphSpec,
    pub target: TargetSpec,
    pub start: StateSpec,
    pub rules: ExpansionRules,
    pub search: FixpointConfig,
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn square(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("graph matrices must be square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl MapSpec {
    pub fn build(&self) -> Result<Box<dyn StateMap>> {
        Ok(match self {
            MapSpec::TrigramReadout { support, continuous_dim, seed } => Box::new(TrigramReadoutMap::new(*support, *continuous_dim, *seed)?),
            MapSpec::GaussianChain { support, width } => Box::new(GaussianChainMap { support: *support, width: *width }),
            MapSpec::Anchor { anchors, metric, temperature, auto_rescale } => {
                let anchors: Vec<(String, DVector<f64>)> =
                    anchors.iter().map(|a| (a.discrete.clone(), DVector::from_vec(a.continuous.clone()))).collect();
                let metric = if *auto_rescale { metric.auto_rescaled(&anchors)? } else { *metric };
                metric.validate()?;
                Box::new(AnchorMap { anchors, metric, temperature: *temperature })
            }
        })
    }
}

impl GraphSpec {
    pub fn build(&self) -> Result<GroundMetricGraph> {
        match self {
            GraphSpec::Path { n } => GroundMetricGraph::path(*n),
            GraphSpec::Explicit { omega, cost } => GroundMetricGraph::new(square(omega)?, square(cost)?),
        }
    }
}

/// One run of a scenario, optionally compared with the exhaustive oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioRun {
    pub result: FixpointResult,
    pub oracle_best: Option<CandidateState>,
    /// `distance(result) − distance(oracle)`; negative when the continuous
    /// search beats the oracle's grid.
    pub gap: Option<f64>,
    pub within_epsilon: Option<bool>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.rules.validate()?;
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon {} must be non-negative", self.epsilon)));
        }
        if self.search.keep == 0 || self.search.budget == 0 || self.search.max_iter == 0 {
            return Err(Error::Config("keep, budget and max_iter must all be at least 1".into()));
        }
        Ok(())
    }

    /// Runs the search (and the oracle when configured) with `seed` in place
    /// of the scenario's own search seed.
    pub fn run(&self, seed: u64) -> Result<ScenarioRun> {
        self.validate()?;
        let map = self.map.build()?;
        let graph = self.graph.build()?;
        if map.support_size() != graph.n() {
            return Err(Error::Dimension(format!("map support {} differs from graph size {}", map.support_size(), graph.n())));
        }
        let target = match &self.target {
            TargetSpec::Weights { weights } => Distribution::new(DVector::from_vec(weights.clone()))?,
            TargetSpec::State { discrete, continuous } => map.map(discrete, &DVector::from_vec(continuous.clone()))?,
        };
        let problem = Problem { map: map.as_ref(), target: &target, graph: &graph };
        let start = problem.candidate(&self.start.discrete, DVector::from_vec(self.start.continuous.clone()))?;
        let cfg = FixpointConfig { seed, ..self.search.clone() };
        let result = iterate_to_fixpoint(&start, &problem, &self.rules, &cfg)?;
        let (oracle_best, gap, within_epsilon) = match &self.oracle {
            None => (None, None, None),
            Some(o) => {
                let space = FiniteSpace::strings_times_grid(&self.rules.alphabet, self.rules.min_len, self.rules.max_len, &o.grid)?;
                let start_index = space.position(&self.start.discrete, start.continuous()).ok_or_else(|| {
                    Error::Config("the oracle grid must contain the start state".into())
                })?;
                let best = dp_oracle(&space, start_index, &problem)?.swap_remove(0);
                let gap = result.best.score().unwrap_or(f64::INFINITY) - best.score().unwrap_or(f64::INFINITY);
                (Some(best), Some(gap), Some(gap <= self.epsilon))
            }
        };
        Ok(ScenarioRun { result, oracle_best, gap, within_epsilon })
    }

    /// [`Scenario::run`] inside a dedicated pool of `workers` threads.
    pub fn run_with_workers(&self, seed: u64, workers: usize) -> Result<ScenarioRun> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| self.run(seed))
    }
}

/// The five-node chain family: strings over {a, b} of length 1 to 5 plus
/// one real offset, mapped to a Gaussian bump (width 0.5) centred at
/// `length − 1 + offset` on a path graph. The seed draws the target centre
/// uniformly from [0.5, 3.5]; the search starts at ("a", 0).
pub fn chain_family(seed: u64) -> Scenario {
    let mu: f64 = rng(seed).random_range(0.5..3.5);
    let map = GaussianChainMap { support: 5, width: 0.5 };
    let weights = map.at(mu).map(|d| d.weights().iter().copied().collect()).unwrap_or_default();
    Scenario {
        name: format!("chain-{seed}"),
        map: MapSpec::GaussianChain { support: 5, width: 0.5 },
        graph: GraphSpec::Path { n: 5 },
        target: TargetSpec::Weights { weights },
        start: StateSpec { discrete: "a".into(), continuous: vec![0.0] },
        rules: ExpansionRules { alphabet: vec!['a', 'b'], min_len: 1, max_len: 5, step_sigma: 0.25, perturbations: 4 },
        search: FixpointConfig { keep: 4, budget: 32, max_iter: 30, seed },
        oracle: Some(OracleSpec { grid: vec![-0.5, -0.25, 0.0, 0.25, 0.5] }),
        epsilon: DEFAULT_EPSILON,
    }
}
