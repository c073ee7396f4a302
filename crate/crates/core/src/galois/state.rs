use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{w2_exact, Distribution, GroundMetricGraph};
use crate::util::{derive_seed, softmax};

/// Maps the hybrid state `(discrete, continuous)` to a distribution.
pub trait StateMap: Send + Sync {
    fn support_size(&self) -> usize;
    fn map(&self, discrete: &str, continuous: &DVector<f64>) -> Result<Distribution>;
}

/// A hybrid candidate with its induced distribution and, once scored, its
/// W2 distance to the search target.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateState {
    discrete: String,
    continuous: DVector<f64>,
    distribution: Distribution,
    score: Option<f64>,
}

impl CandidateState {
    pub fn new(discrete: &str, continuous: DVector<f64>, map: &dyn StateMap) -> Result<Self> {
        if continuous.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidDomain("continuous part must be finite".into()));
        }
        let distribution = map.map(discrete, &continuous)?;
        Ok(Self { discrete: discrete.to_string(), continuous, distribution, score: None })
    }

    pub fn discrete(&self) -> &str {
        &self.discrete
    }

    pub fn continuous(&self) -> &DVector<f64> {
        &self.continuous
    }

    pub fn distribution(&self) -> &Distribution {
        &self.distribution
    }

    pub fn score(&self) -> Option<f64> {
        self.score
    }

    /// Stable lexicographic identity: the string, then each coordinate in
    /// exact scientific notation.
    pub fn key(&self) -> String {
        let mut k = self.discrete.clone();
        k.push('|');
        let parts: Vec<String> = self.continuous.iter().map(|c| format!("{c:+.17e}")).collect();
        k.push_str(&parts.join(","));
        k
    }

    pub fn distance_to(&self, target: &Distribution, g: &GroundMetricGraph) -> Result<f64> {
        Ok(w2_exact(&self.distribution, target, g)?.0)
    }

    /// Caches the distance to `target` (recomputed only if absent).
    pub fn scored(mut self, target: &Distribution, g: &GroundMetricGraph) -> Result<Self> {
        if self.score.is_none() {
            self.score = Some(self.distance_to(target, g)?);
        }
        Ok(self)
    }
}

/// Weights of the hybrid ground metric `α·edit + β·‖Δc‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridMetricSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl HybridMetricSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x >= 0.0 && x.is_finite();
        if !ok(self.alpha) || !ok(self.beta) || (self.alpha == 0.0 && self.beta == 0.0) {
            return Err(Error::Config(format!("hybrid weights ({}, {}) must be non-negative and not both zero", self.alpha, self.beta)));
        }
        Ok(())
    }

    /// Rescales so both components contribute equally on average over all
    /// pairs of `sample`, keeping the mean total distance unchanged. A
    /// component that is constant zero over the sample keeps its weight.
    pub fn auto_rescaled(&self, sample: &[(String, DVector<f64>)]) -> Result<Self> {
        self.validate()?;
        let (mut de, mut dc, mut pairs) = (0.0, 0.0, 0usize);
        for i in 0..sample.len() {
            for j in (i + 1)..sample.len() {
                de += strsim::levenshtein(&sample[i].0, &sample[j].0) as f64;
                dc += continuous_distance(&sample[i].1, &sample[j].1)?;
                pairs += 1;
            }
        }
        if pairs == 0 || de == 0.0 || dc == 0.0 {
            return Ok(*self);
        }
        let (de, dc) = (de / pairs as f64, dc / pairs as f64);
        let half = (self.alpha * de + self.beta * dc) / 2.0;
        Ok(Self { alpha: half / de, beta: half / dc })
    }
}

fn continuous_distance(a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("continuous parts have {} and {} entries", a.len(), b.len())));
    }
    Ok((a - b).norm())
}

pub fn hybrid_distance(s1: &CandidateState, s2: &CandidateState, spec: &HybridMetricSpec) -> Result<f64> {
    hybrid_distance_raw(&s1.discrete, &s1.continuous, &s2.discrete, &s2.continuous, spec)
}

fn hybrid_distance_raw(d1: &str, c1: &DVector<f64>, d2: &str, c2: &DVector<f64>, spec: &HybridMetricSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.alpha * strsim::levenshtein(d1, d2) as f64 + spec.beta * continuous_distance(c1, c2)?)
}

/// Ground-metric graph over a list of anchor states with hybrid costs.
pub fn hybrid_graph(anchors: &[(String, DVector<f64>)], spec: &HybridMetricSpec) -> Result<GroundMetricGraph> {
    let n = anchors.len();
    let mut cost = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = hybrid_distance_raw(&anchors[i].0, &anchors[i].1, &anchors[j].0, &anchors[j].1, spec)?;
            cost[(i, j)] = d;
            cost[(j, i)] = d;
        }
    }
    GroundMetricGraph::from_cost(cost, None)
}

/// Outcome of the unified partial order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderCmp {
    Better,
    Worse,
    Equal,
}

/// `s1 ≤ s2` iff `W2(p_{s1}, target) ≤ W2(p_{s2}, target)`, with distances
/// within `1e-9` treated as equal. Always recomputes the distances.
pub fn partial_order_cmp(s1: &CandidateState, s2: &CandidateState, target: &Distribution, g: &GroundMetricGraph) -> Result<OrderCmp> {
    let d1 = s1.distance_to(target, g)?;
    let d2 = s2.distance_to(target, g)?;
    Ok(if (d1 - d2).abs() < 1e-9 {
        OrderCmp::Equal
    } else if d1 < d2 {
        OrderCmp::Better
    } else {
        OrderCmp::Worse
    })
}

/// The order used by shrink: score, then key.
pub(crate) fn rank_cmp(a: &CandidateState, b: &CandidateState) -> Ordering {
    let sa = a.score.unwrap_or(f64::INFINITY);
    let sb = b.score.unwrap_or(f64::INFINITY);
    sa.total_cmp(&sb).then_with(|| a.key().cmp(&b.key()))
}

const TRIGRAM_BUCKETS: usize = 32;

/// `softmax(R · [trigram counts ‖ continuous])` with a fixed seeded
/// Gaussian readout `R`. Trigrams are taken over the string padded with `^`
/// and `$` and hashed into 32 buckets.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigramReadoutMap {
    readout: DMatrix<f64>,
    continuous_dim: usize,
}

impl TrigramReadoutMap {
    pub fn new(support: usize, continuous_dim: usize, seed: u64) -> Result<Self> {
        if support == 0 {
            return Err(Error::Config("support size must be positive".into()));
        }
        let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, "trigram-readout"));
        let cols = TRIGRAM_BUCKETS + continuous_dim;
        let scale = 1.0 / (cols as f64).sqrt();
        let readout = DMatrix::from_fn(support, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut r);
            z * scale
        });
        Ok(Self { readout, continuous_dim })
    }

    pub fn features(&self, discrete: &str, continuous: &DVector<f64>) -> Result<DVector<f64>> {
        if continuous.len() != self.continuous_dim {
            return Err(Error::Dimension(format!("continuous part has {} entries, map expects {}", continuous.len(), self.continuous_dim)));
        }
        let padded: Vec<char> = std::iter::once('^').chain(discrete.chars()).chain(std::iter::once('$')).collect();
        let mut f = DVector::zeros(TRIGRAM_BUCKETS + self.continuous_dim);
        for w in padded.windows(3) {
            let tri: String = w.iter().collect();
            f[(derive_seed(0, &format!("trigram:{tri}")) % TRIGRAM_BUCKETS as u64) as usize] += 1.0;
        }
        if padded.len() < 3 {
            let tri: String = padded.iter().collect();
            f[(derive_seed(0, &format!("trigram:{tri}")) % TRIGRAM_BUCKETS as u64) as usize] += 1.0;
        }
        f.rows_mut(TRIGRAM_BUCKETS, self.continuous_dim).copy_from(continuous);
        Ok(f)
    }
}

impl StateMap for TrigramReadoutMap {
    fn support_size(&self) -> usize {
        self.readout.nrows()
    }

    fn map(&self, discrete: &str, continuous: &DVector<f64>) -> Result<Distribution> {
        Distribution::new(softmax(&(&self.readout * self.features(discrete, continuous)?)))
    }
}

/// Discretized Gaussian bump on nodes `0..n` centred at
/// `μ = (len(discrete) − 1) + c₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianChainMap {
    pub support: usize,
    pub width: f64,
}

impl GaussianChainMap {
    pub fn center(discrete: &str, continuous: &DVector<f64>) -> f64 {
        discrete.chars().count() as f64 - 1.0 + continuous.get(0).copied().unwrap_or(0.0)
    }

    pub fn at(&self, mu: f64) -> Result<Distribution> {
        if !(self.width > 0.0) || self.support == 0 {
            return Err(Error::Config("chain map needs positive width and support".into()));
        }
        let logits = DVector::from_fn(self.support, |i, _| -(i as f64 - mu).powi(2) / (2.0 * self.width * self.width));
        Distribution::new(softmax(&logits))
    }
}

impl StateMap for GaussianChainMap {
    fn support_size(&self) -> usize {
        self.support
    }

    fn map(&self, discrete: &str, continuous: &DVector<f64>) -> Result<Distribution> {
        if continuous.len() != 1 {
            return Err(Error::Dimension(format!("chain map takes one continuous coordinate, got {}", continuous.len())));
        }
        self.at(Self::center(discrete, continuous))
    }
}

/// `p_i ∝ exp(−ω(s, anchor_i) / τ)` over a fixed anchor list under the hybrid metric.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorMap {
    pub anchors: Vec<(String, DVector<f64>)>,
    pub metric: HybridMetricSpec,
    pub temperature: f64,
}

impl StateMap for AnchorMap {
    fn support_size(&self) -> usize {
        self.anchors.len()
    }

    fn map(&self, discrete: &str, continuous: &DVector<f64>) -> Result<Distribution> {
        if !(self.temperature > 0.0) || self.anchors.is_empty() {
            return Err(Error::Config("anchor map needs anchors and a positive temperature".into()));
        }
        let mut logits = DVector::zeros(self.anchors.len());
        for (i, (d, c)) in self.anchors.iter().enumerate() {
            logits[i] = -hybrid_distance_raw(discrete, continuous, d, c, &self.metric)? / self.temperature;
        }
        Distribution::new(softmax(&logits))
    }
}
