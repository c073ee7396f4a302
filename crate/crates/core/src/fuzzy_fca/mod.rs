//! Fuzzy concept lattices learned for predictive usefulness.
//!
//! A [`FuzzyLattice`] maps a state to membership degrees over `r` core and
//! `s` discovered concepts. A [`UtilityNet`] predicts outcomes from those
//! memberships alone, and the two are trained end to end by
//! [`cotrain_step`]. Core concepts can be pre-wired as fixed prototype
//! detectors whose weights never move.
//!
//! No order constraints are imposed between concepts; whatever lattice
//! structure exists is carried by the membership patterns.

mod lattice;
mod task;

use nalgebra::{DMatrix, DVector};

pub use lattice::{clamp_core_concepts, fcl_forward, ClampKind, ClampSpec, FuzzyConfig, FuzzyLattice, DEFAULT_DISCOVERED, DEFAULT_LEARNER_RATE, PROTOTYPE_SCALE};
pub use task::threshold_task;

use crate::error::{Error, Result};
use crate::pc_net::{Activation, PCConfig, PCNetwork};

/// Outcome predictor `N: [0,1]ⁿ → ℝ^ℓ`, linear unless hidden tanh layers are requested.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityNet {
    pub(crate) net: PCNetwork,
}

impl UtilityNet {
    pub fn new(inputs: usize, outputs: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut layers = vec![outputs];
        layers.extend(hidden.iter().rev());
        layers.push(inputs);
        let mut acts = vec![Activation::Identity];
        acts.extend(std::iter::repeat_n(Activation::Tanh, hidden.len()));
        let mut cfg = PCConfig::new(layers, Activation::Identity, 0.0, 0.0, seed);
        cfg.layer_activations = Some(acts);
        cfg.use_bias = true;
        Ok(Self { net: PCNetwork::new(&cfg)? })
    }

    pub fn inputs(&self) -> usize {
        self.net.layers().last().map_or(0, |l| l.dim)
    }

    pub fn outputs(&self) -> usize {
        self.net.layers()[0].dim
    }

    pub fn network(&self) -> &PCNetwork {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut PCNetwork {
        &mut self.net
    }

    pub fn predict(&self, memberships: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.net.feedforward(memberships)?.values.swap_remove(0))
    }
}

/// Loss and raw (unmasked) gradients of one co-training batch.
#[derive(Clone, Debug)]
pub struct CoGradients {
    pub loss: f64,
    pub learner_w: DMatrix<f64>,
    pub learner_b: DVector<f64>,
    pub utility_w: Vec<DMatrix<f64>>,
    pub utility_b: Vec<DVector<f64>>,
}

fn check_pair(lattice: &FuzzyLattice, utility: &UtilityNet, y: &DVector<f64>) -> Result<()> {
    if utility.inputs() != lattice.n() {
        return Err(Error::Dimension(format!("utility net takes {} inputs, lattice has {} concepts", utility.inputs(), lattice.n())));
    }
    if y.len() != utility.outputs() {
        return Err(Error::Dimension(format!("outcome has {} entries, utility net predicts {}", y.len(), utility.outputs())));
    }
    Ok(())
}

/// `ℒ = Σᵢ ‖N(ℱ(xᵢ)) − yᵢ‖² + λ Σᵢ Σ_c ℱ_c(xᵢ)` and its exact gradient.
pub fn cotrain_gradients(lattice: &FuzzyLattice, utility: &UtilityNet, batch: &[(DVector<f64>, DVector<f64>)]) -> Result<CoGradients> {
    if batch.is_empty() {
        return Err(Error::Empty("co-training batch".into()));
    }
    let mut g = CoGradients {
        loss: 0.0,
        learner_w: DMatrix::zeros(lattice.n(), 2 * lattice.state_dim()),
        learner_b: DVector::zeros(lattice.n()),
        utility_w: utility.net.weights().iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
        utility_b: utility.net.biases().iter().map(|b| DVector::zeros(b.len())).collect(),
    };
    for (x, y) in batch {
        check_pair(lattice, utility, y)?;
        let lifted = lattice.lift(x)?;
        let fs = lattice.learner.feedforward(&lifted)?;
        let f = &fs.values[0];
        let us = utility.net.feedforward(f)?;
        let r = us.output() - y;
        g.loss += r.norm_squared() + lattice.sparsity * f.sum();
        let (dw, db, df) = utility.net.backprop(&us, &(r * 2.0));
        for (acc, d) in g.utility_w.iter_mut().zip(&dw) {
            *acc += d;
        }
        for (acc, d) in g.utility_b.iter_mut().zip(&db) {
            *acc += d;
        }
        let df = df.add_scalar(lattice.sparsity);
        let (lw, lb, _) = lattice.learner.backprop(&fs, &df);
        g.learner_w += &lw[0];
        g.learner_b += &lb[0];
    }
    Ok(g)
}

/// One full gradient step on both nets (ℱ at `eta · learner_rate`);
/// clamped entries of ℱ are skipped.
/// Returns the batch loss before the step.
pub fn cotrain_step(
    lattice: &mut FuzzyLattice,
    utility: &mut UtilityNet,
    batch: &[(DVector<f64>, DVector<f64>)],
    eta: f64,
) -> Result<f64> {
    let mut g = cotrain_gradients(lattice, utility, batch)?;
    if !g.loss.is_finite() {
        return Err(Error::TrainingDivergence { epoch: lattice.steps });
    }
    lattice.mask_gradient(&mut g.learner_w, &mut g.learner_b);
    let le = eta * lattice.learner_rate;
    lattice.learner.weights_mut()[0] -= g.learner_w * le;
    lattice.learner.biases_mut()[0] -= g.learner_b * le;
    for (w, d) in utility.net.weights_mut().iter_mut().zip(&g.utility_w) {
        *w -= d * eta;
    }
    for (b, d) in utility.net.biases_mut().iter_mut().zip(&g.utility_b) {
        *b -= d * eta;
    }
    lattice.steps += 1;
    Ok(g.loss)
}

/// Full-batch co-training for `steps` steps; returns the loss before each step.
pub fn cotrain(
    lattice: &mut FuzzyLattice,
    utility: &mut UtilityNet,
    data: &[(DVector<f64>, DVector<f64>)],
    steps: usize,
    eta: f64,
) -> Result<Vec<f64>> {
    (0..steps).map(|_| cotrain_step(lattice, utility, data, eta)).collect()
}

/// Holdout mean squared error (averaged over samples and outcome entries)
/// alongside that of the holdout-mean predictor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeScore {
    pub score: f64,
    pub baseline: f64,
}

pub fn evaluate_lattice(lattice: &FuzzyLattice, utility: &UtilityNet, holdout: &[(DVector<f64>, DVector<f64>)]) -> Result<LatticeScore> {
    if holdout.is_empty() {
        return Err(Error::Empty("holdout set".into()));
    }
    let l = utility.outputs();
    let count = (holdout.len() * l) as f64;
    let mut mean = DVector::zeros(l);
    let mut sse = 0.0;
    for (x, y) in holdout {
        check_pair(lattice, utility, y)?;
        sse += (utility.predict(&fcl_forward(lattice, x)?)? - y).norm_squared();
        mean += y;
    }
    mean /= holdout.len() as f64;
    let base: f64 = holdout.iter().map(|(_, y)| (y - &mean).norm_squared()).sum();
    Ok(LatticeScore { score: sse / count, baseline: base / count })
}

/// Training error of the best affine outcome predictor given only the
/// memberships, and of the best affine predictor given the state as well
/// as the memberships it determines. The second feature set contains the
/// first, so the lattice pipeline can never come out ahead.
pub fn bottleneck_scores(lattice: &FuzzyLattice, data: &[(DVector<f64>, DVector<f64>)]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Empty("bottleneck data".into()));
    }
    let f: Vec<DVector<f64>> = data.iter().map(|(x, _)| fcl_forward(lattice, x)).collect::<Result<_>>()?;
    let l = data[0].1.len();
    let y = DMatrix::from_fn(data.len(), l, |i, j| data[i].1[j]);
    let n = lattice.n();
    let k = lattice.state_dim();
    let concepts = DMatrix::from_fn(data.len(), n + 1, |i, j| if j < n { f[i][j] } else { 1.0 });
    let direct = DMatrix::from_fn(data.len(), n + k + 1, |i, j| match j {
        j if j < n => f[i][j],
        j if j < n + k => data[i].0[j - n],
        _ => 1.0,
    });
    let count = (data.len() * l) as f64;
    Ok((least_squares_sse(&concepts, &y) / count, least_squares_sse(&direct, &y) / count))
}

fn least_squares_sse(a: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let (vals, vecs) = crate::util::sym_eigen_desc(&(a.transpose() * a));
    let cutoff = 1e-12 * vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let aty = a.transpose() * y;
    let mut coef = DMatrix::zeros(a.ncols(), y.ncols());
    for (i, v) in vals.iter().enumerate() {
        if *v > cutoff {
            let u = vecs.column(i);
            coef += u * (u.transpose() * &aty) / *v;
        }
    }
    (a * coef - y).norm_squared()
}
