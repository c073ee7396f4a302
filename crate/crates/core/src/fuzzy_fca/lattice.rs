use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pc_net::{Activation, PCConfig, PCNetwork};

/// Fixed scale of the prototype detectors installed by [`clamp_core_concepts`].
pub const PROTOTYPE_SCALE: f64 = 8.0;
pub const DEFAULT_DISCOVERED: usize = 8;
pub const DEFAULT_LEARNER_RATE: f64 = 20.0;
const EXPORT_FORMAT: &str = "actpc-fuzzy-lattice-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzyConfig {
    pub state_dim: usize,
    /// Number of core (ontology) concepts `r`.
    pub core: usize,
    /// Number of discovered concepts `s`.
    #[serde(default = "default_discovered")]
    pub discovered: usize,
    #[serde(default)]
    pub seed: u64,
    /// Weight of an L1 penalty on memberships; off when absent.
    #[serde(default)]
    pub sparsity: Option<f64>,
    /// Multiplier on the co-training step size for ℱ relative to the utility net.
    #[serde(default = "default_learner_rate")]
    pub learner_rate: f64,
}

fn default_learner_rate() -> f64 {
    DEFAULT_LEARNER_RATE
}

fn default_discovered() -> usize {
    DEFAULT_DISCOVERED
}

impl FuzzyConfig {
    pub fn new(state_dim: usize, core: usize, seed: u64) -> Self {
        Self { state_dim, core, discovered: DEFAULT_DISCOVERED, seed, sparsity: None, learner_rate: DEFAULT_LEARNER_RATE }
    }
}

/// How a clamped concept row was built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClampKind {
    /// `σ(β · cos(x, centroid))`.
    Prototype { centroid: Vec<f64>, beta: f64 },
    /// `σ(wᵀx + b)` on the raw state.
    Linear { weights: Vec<f64>, bias: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClampSpec {
    pub concept: usize,
    pub name: String,
    #[serde(flatten)]
    pub kind: ClampKind,
}

/// The concept learner ℱ: one sigmoid layer over the lifted state
/// `[x/‖x‖, x]`, so that prototype detectors (cosine to a centroid) and
/// ordinary threshold units live in the same weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FuzzyLattice {
    names: Vec<String>,
    core: usize,
    state_dim: usize,
    pub(crate) learner: PCNetwork,
    /// Row-major `n × (2k + 1)`; the last column is the bias.
    mask: Vec<bool>,
    clamps: Vec<ClampSpec>,
    thresholds: Vec<f64>,
    pub sparsity: f64,
    pub learner_rate: f64,
    pub(crate) steps: usize,
}

impl FuzzyLattice {
    pub fn new(cfg: &FuzzyConfig) -> Result<Self> {
        if cfg.state_dim == 0 {
            return Err(Error::Config("state dimension must be positive".into()));
        }
        let n = cfg.core + cfg.discovered;
        if n == 0 {
            return Err(Error::Config("a lattice needs at least one concept".into()));
        }
        let sparsity = cfg.sparsity.unwrap_or(0.0);
        if !(sparsity >= 0.0 && sparsity.is_finite()) {
            return Err(Error::Config(format!("sparsity weight {sparsity} must be finite and non-negative")));
        }
        if !(cfg.learner_rate >= 0.0 && cfg.learner_rate.is_finite()) {
            return Err(Error::Config(format!("learner rate {} must be finite and non-negative", cfg.learner_rate)));
        }
        let mut pc = PCConfig::new(vec![n, 2 * cfg.state_dim], Activation::Sigmoid, 0.0, 0.0, cfg.seed);
        pc.use_bias = true;
        let names = (0..cfg.core).map(|i| format!("core{i}")).chain((0..cfg.discovered).map(|i| format!("concept{i}"))).collect();
        Ok(Self {
            names,
            core: cfg.core,
            state_dim: cfg.state_dim,
            learner: PCNetwork::new(&pc)?,
            mask: vec![false; n * (2 * cfg.state_dim + 1)],
            clamps: Vec::new(),
            thresholds: vec![0.5; n],
            sparsity,
            learner_rate: cfg.learner_rate,
            steps: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn core(&self) -> usize {
        self.core
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn clamps(&self) -> &[ClampSpec] {
        &self.clamps
    }

    pub fn learner(&self) -> &PCNetwork {
        &self.learner
    }

    /// Weight matrix `n × 2k` of ℱ.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.learner.weights()[0]
    }

    pub fn biases(&self) -> &DVector<f64> {
        &self.learner.biases()[0]
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn set_thresholds(&mut self, t: Vec<f64>) -> Result<()> {
        if t.len() != self.n() {
            return Err(Error::Dimension(format!("{} thresholds for {} concepts", t.len(), self.n())));
        }
        if t.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidDomain("thresholds must lie in [0, 1]".into()));
        }
        self.thresholds = t;
        Ok(())
    }

    /// Sets each concept's threshold to its median membership over `states`.
    pub fn calibrate_thresholds(&mut self, states: &[DVector<f64>]) -> Result<()> {
        if states.is_empty() {
            return Err(Error::Empty("no states to calibrate on".into()));
        }
        let f: Vec<DVector<f64>> = states.iter().map(|x| fcl_forward(self, x)).collect::<Result<_>>()?;
        self.thresholds = (0..self.n())
            .map(|c| crate::util::median(&f.iter().map(|v| v[c]).collect::<Vec<_>>()).unwrap_or(0.5))
            .collect();
        Ok(())
    }

    pub fn is_clamped(&self, concept: usize, column: usize) -> bool {
        self.mask[concept * self.width() + column]
    }

    fn width(&self) -> usize {
        2 * self.state_dim + 1
    }

    /// `[x/‖x‖, x]`, with the normalized half zero at the origin.
    pub fn lift(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.state_dim {
            return Err(Error::Dimension(format!("state has {} entries, lattice expects {}", x.len(), self.state_dim)));
        }
        let norm = x.norm();
        let unit = if norm > 0.0 { x / norm } else { DVector::zeros(x.len()) };
        Ok(DVector::from_iterator(2 * self.state_dim, unit.iter().chain(x.iter()).copied()))
    }

    fn install(&mut self, concept: usize, name: &str, row: &DVector<f64>, bias: f64, kind: ClampKind) {
        let w = self.width();
        self.learner.weights_mut()[0].set_row(concept, &row.transpose());
        self.learner.biases_mut()[0][concept] = bias;
        self.mask[concept * w..(concept + 1) * w].iter_mut().for_each(|m| *m = true);
        self.names[concept] = name.to_string();
        self.clamps.retain(|c| c.concept != concept);
        self.clamps.push(ClampSpec { concept, name: name.to_string(), kind });
        self.clamps.sort_by_key(|c| c.concept);
    }

    fn check_name(&self, concept: usize, name: &str) -> Result<()> {
        if self.names.iter().enumerate().any(|(i, n)| i != concept && n == name) {
            return Err(Error::Duplicate(name.to_string()));
        }
        Ok(())
    }

    /// Clamps concept `concept` to the fixed raw-state detector `σ(wᵀx + b)`.
    pub fn clamp_linear(&mut self, concept: usize, name: &str, weights: &[f64], bias: f64) -> Result<()> {
        if concept >= self.n() {
            return Err(Error::Dimension(format!("concept {concept} out of range for {} concepts", self.n())));
        }
        if weights.len() != self.state_dim {
            return Err(Error::Dimension(format!("{} weights for state dimension {}", weights.len(), self.state_dim)));
        }
        self.check_name(concept, name)?;
        let k = self.state_dim;
        let row = DVector::from_fn(2 * k, |i, _| if i < k { 0.0 } else { weights[i - k] });
        self.install(concept, name, &row, bias, ClampKind::Linear { weights: weights.to_vec(), bias });
        Ok(())
    }

    /// Zeroes the gradient entries of clamped weights and biases.
    pub(crate) fn mask_gradient(&self, dw: &mut DMatrix<f64>, db: &mut DVector<f64>) {
        let k2 = 2 * self.state_dim;
        for c in 0..self.n() {
            for j in 0..k2 {
                if self.is_clamped(c, j) {
                    dw[(c, j)] = 0.0;
                }
            }
            if self.is_clamped(c, k2) {
                db[c] = 0.0;
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let w = self.weights();
        let export = LatticeExport {
            format: EXPORT_FORMAT.into(),
            state_dim: self.state_dim,
            core: self.core,
            names: self.names.clone(),
            clamps: self.clamps.clone(),
            thresholds: self.thresholds.clone(),
            sparsity: self.sparsity,
            learner_rate: self.learner_rate,
            seed: self.learner.seed(),
            weights: (0..w.nrows()).map(|r| w.row(r).iter().copied().collect()).collect(),
            biases: self.biases().iter().copied().collect(),
        };
        Ok(serde_json::to_string_pretty(&export)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let e: LatticeExport = serde_json::from_str(text)?;
        if e.format != EXPORT_FORMAT {
            return Err(Error::Format(format!("unexpected lattice format `{}`", e.format)));
        }
        let n = e.names.len();
        if n < e.core {
            return Err(Error::Format("fewer names than core concepts".into()));
        }
        let mut lattice = FuzzyLattice::new(&FuzzyConfig {
            state_dim: e.state_dim,
            core: e.core,
            discovered: n - e.core,
            seed: e.seed,
            sparsity: Some(e.sparsity),
            learner_rate: e.learner_rate,
        })?;
        if e.weights.len() != n || e.weights.iter().any(|r| r.len() != 2 * e.state_dim) || e.biases.len() != n {
            return Err(Error::Format("weight table does not match the lattice shape".into()));
        }
        let w = DMatrix::from_fn(n, 2 * e.state_dim, |r, c| e.weights[r][c]);
        lattice.learner.set_weight(0, w)?;
        lattice.learner.biases_mut()[0] = DVector::from_vec(e.biases);
        lattice.names = e.names;
        let wd = lattice.width();
        for c in &e.clamps {
            if c.concept >= n {
                return Err(Error::Format(format!("clamp on concept {} out of range", c.concept)));
            }
            lattice.mask[c.concept * wd..(c.concept + 1) * wd].iter_mut().for_each(|m| *m = true);
        }
        lattice.clamps = e.clamps;
        lattice.set_thresholds(e.thresholds)?;
        Ok(lattice)
    }
}

#[derive(Serialize, Deserialize)]
struct LatticeExport {
    format: String,
    state_dim: usize,
    core: usize,
    names: Vec<String>,
    clamps: Vec<ClampSpec>,
    thresholds: Vec<f64>,
    sparsity: f64,
    learner_rate: f64,
    seed: u64,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

/// Membership degrees `ℱ(x) ∈ [0, 1]ⁿ`.
pub fn fcl_forward(lattice: &FuzzyLattice, x: &DVector<f64>) -> Result<DVector<f64>> {
    let lifted = lattice.lift(x)?;
    Ok(lattice.learner.feedforward(&lifted)?.values.swap_remove(0))
}

/// Installs a fixed prototype detector for each of the `r` core concepts, in
/// order: the row is `β·ĉ` on the normalized half of the lifted state and
/// zero elsewhere, so the membership is `σ(β cos(x, c))`.
pub fn clamp_core_concepts(mut lattice: FuzzyLattice, centroids: &[(String, DVector<f64>)]) -> Result<FuzzyLattice> {
    if centroids.len() != lattice.core {
        return Err(Error::Config(format!("{} centroids for {} core concepts", centroids.len(), lattice.core)));
    }
    let mut seen = BTreeSet::new();
    for (name, _) in centroids {
        if !seen.insert(name.as_str()) || lattice.names[lattice.core..].contains(name) {
            return Err(Error::Duplicate(name.clone()));
        }
    }
    let k = lattice.state_dim;
    for (i, (name, c)) in centroids.iter().enumerate() {
        if c.len() != k {
            return Err(Error::Dimension(format!("centroid `{name}` has {} entries, expected {k}", c.len())));
        }
        let norm = c.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidDomain(format!("centroid `{name}` must be finite and nonzero")));
        }
        let row = DVector::from_fn(2 * k, |j, _| if j < k { PROTOTYPE_SCALE * c[j] / norm } else { 0.0 });
        let kind = ClampKind::Prototype { centroid: c.iter().copied().collect(), beta: PROTOTYPE_SCALE };
        lattice.install(i, name, &row, 0.0, kind);
    }
    Ok(lattice)
}
