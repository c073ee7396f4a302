//! Layered predictive-coding networks.
//!
//! Layer 1 (index 0) is the bottom, observation layer; the top layer carries
//! the most abstract latent state. Each layer below the top receives a
//! prediction from the layer above, `ẑ^ℓ = f_ℓ(W^ℓ z^{ℓ+1} + b^ℓ)`, and the top
//! layer is predicted by a fixed prior (zero by default). The network energy
//! is `ℒ_pred = Σ_ℓ ‖z^ℓ − ẑ^ℓ‖²`.
//!
//! [`PCNetwork::micro_iterate`] clamps the bottom layer to an input and
//! alternates gradient steps on the free states and on the weights. Weight
//! gradients can be reshaped by a [`WeightPreconditioner`]; this is where the
//! Wasserstein natural gradient enters.
//!
//! For supervised use the top layer can be clamped as well, and
//! [`PCNetwork::feedforward`] / [`PCNetwork::backprop`] provide the
//! equivalent top-down sweep and its exact gradient.

mod activation;
mod checkpoint;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use activation::Activation;

use crate::error::{Error, Result};
use crate::util::rng;

/// Whether free states and weights are updated from the same error snapshot
/// or states are settled first and weights then use the refreshed errors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    #[default]
    Simultaneous,
    StatesFirst,
}

/// JSON-loadable architecture and hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PCConfig {
    /// Layer widths, bottom (observation) first.
    pub layers: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    /// Optional per-layer override for the `layers.len() − 1` predicted layers.
    #[serde(default)]
    pub layer_activations: Option<Vec<Activation>>,
    pub eta_z: f64,
    pub eta_w: f64,
    #[serde(default)]
    pub use_bias: bool,
    #[serde(default)]
    pub update_order: UpdateOrder,
    #[serde(default)]
    pub seed: u64,
    /// Prediction for the top layer; zero when absent.
    #[serde(default)]
    pub top_prior: Option<Vec<f64>>,
}

impl PCConfig {
    pub fn new(layers: Vec<usize>, activation: Activation, eta_z: f64, eta_w: f64, seed: u64) -> Self {
        Self {
            layers,
            activation,
            layer_activations: None,
            eta_z,
            eta_w,
            use_bias: false,
            update_order: UpdateOrder::Simultaneous,
            seed,
            top_prior: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Width and prediction activation of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub dim: usize,
    pub activation: Activation,
}

/// Per-layer errors and the total energy.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorField {
    pub errors: Vec<DVector<f64>>,
    pub total: f64,
}

/// Loss trace of a run of micro-iterations. `losses[0]` is the energy before
/// the first update and `losses[k]` the energy after the last one.
#[derive(Clone, Debug)]
pub struct MicroTrace {
    pub losses: Vec<f64>,
    /// `ℒ_pred − α ℛ`, equal to `losses` when no reward is attached.
    pub objective: Vec<f64>,
    pub final_errors: ErrorField,
}

/// Reshapes the weight gradient of one layer before it is applied.
pub trait WeightPreconditioner {
    fn precondition(&mut self, layer: usize, net: &PCNetwork, grad: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

/// Dense per-layer matrices acting on the row-major flattening of each
/// weight gradient; `None` leaves a layer unpreconditioned.
#[derive(Clone, Debug)]
pub struct MatrixPreconditioner {
    pub per_layer: Vec<Option<DMatrix<f64>>>,
}

impl MatrixPreconditioner {
    pub fn identity(net: &PCNetwork) -> Self {
        Self {
            per_layer: net.weights.iter().map(|w| Some(DMatrix::identity(w.len(), w.len()))).collect(),
        }
    }
}

/// Row-major flattening of a matrix.
pub fn flatten_row_major(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.len(), (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])))
}

/// Inverse of [`flatten_row_major`].
pub fn unflatten_row_major(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

impl WeightPreconditioner for MatrixPreconditioner {
    fn precondition(&mut self, layer: usize, _net: &PCNetwork, grad: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self.per_layer.get(layer).and_then(|p| p.as_ref()) {
            None => Ok(grad.clone()),
            Some(p) => {
                if p.nrows() != grad.len() || p.ncols() != grad.len() {
                    return Err(Error::Dimension(format!(
                        "preconditioner for layer {layer} is {}x{}, gradient has {} entries",
                        p.nrows(),
                        p.ncols(),
                        grad.len()
                    )));
                }
                Ok(unflatten_row_major(&(p * flatten_row_major(grad)), grad.nrows(), grad.ncols()))
            }
        }
    }
}

/// Optional differentiable reward added to the objective as `−α ℛ`.
pub trait RewardTerm {
    /// Value of `ℛ` and its gradients with respect to every layer state and
    /// every weight matrix (same shapes as the network's).
    fn evaluate(&self, net: &PCNetwork) -> (f64, Vec<DVector<f64>>, Vec<DMatrix<f64>>);
}

/// A reward term together with its weight `α`.
pub struct Reward<'a> {
    pub alpha: f64,
    pub term: &'a dyn RewardTerm,
}

/// Gradients of the energy with respect to parameters and states.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub states: Vec<DVector<f64>>,
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Result of a top-down sweep used for supervised training.
#[derive(Clone, Debug)]
pub struct Sweep {
    /// Layer values, bottom first; the last entry is the top input.
    pub values: Vec<DVector<f64>>,
}

impl Sweep {
    pub fn output(&self) -> &DVector<f64> {
        &self.values[0]
    }
}

/// A layered predictive-coding network.
#[derive(Clone, Debug, PartialEq)]
pub struct PCNetwork {
    layers: Vec<LayerSpec>,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    states: Vec<DVector<f64>>,
    prior: DVector<f64>,
    pub eta_z: f64,
    pub eta_w: f64,
    pub use_bias: bool,
    pub update_order: UpdateOrder,
    seed: u64,
}

impl PCNetwork {
    /// Builds a network with weights drawn uniformly from `[−1/√fan_in, 1/√fan_in]`,
    /// zero biases and zero states.
    pub fn new(cfg: &PCConfig) -> Result<Self> {
        let n = cfg.layers.len();
        if n < 2 {
            return Err(Error::Config("a network needs at least two layers".into()));
        }
        if cfg.layers.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(cfg.eta_z >= 0.0 && cfg.eta_w >= 0.0 && cfg.eta_z.is_finite() && cfg.eta_w.is_finite()) {
            return Err(Error::Config("step sizes must be finite and non-negative".into()));
        }
        let acts = match &cfg.layer_activations {
            Some(a) if a.len() != n - 1 => {
                return Err(Error::Config(format!("{} layer activations for {} predicted layers", a.len(), n - 1)))
            }
            Some(a) => a.clone(),
            None => vec![cfg.activation; n - 1],
        };
        let mut layers: Vec<LayerSpec> =
            acts.iter().zip(&cfg.layers).map(|(a, d)| LayerSpec { dim: *d, activation: *a }).collect();
        layers.push(LayerSpec { dim: cfg.layers[n - 1], activation: Activation::Identity });
        let prior = match &cfg.top_prior {
            Some(p) if p.len() != cfg.layers[n - 1] => {
                return Err(Error::Config(format!("top prior has {} entries, top layer {}", p.len(), cfg.layers[n - 1])))
            }
            Some(p) => DVector::from_vec(p.clone()),
            None => DVector::zeros(cfg.layers[n - 1]),
        };
        let mut r = rng(cfg.seed);
        let weights: Vec<DMatrix<f64>> = (0..n - 1)
            .map(|l| {
                let (out, inp) = (cfg.layers[l], cfg.layers[l + 1]);
                let s = 1.0 / (inp as f64).sqrt();
                DMatrix::from_fn(out, inp, |_, _| r.random_range(-s..=s))
            })
            .collect();
        Ok(Self {
            biases: (0..n - 1).map(|l| DVector::zeros(cfg.layers[l])).collect(),
            states: cfg.layers.iter().map(|d| DVector::zeros(*d)).collect(),
            layers,
            weights,
            prior,
            eta_z: cfg.eta_z,
            eta_w: cfg.eta_w,
            use_bias: cfg.use_bias,
            update_order: cfg.update_order,
            seed: cfg.seed,
        })
    }

    /// Configuration that reproduces this network's architecture and hyperparameters.
    pub fn config(&self) -> PCConfig {
        PCConfig {
            layers: self.layers.iter().map(|l| l.dim).collect(),
            activation: self.layers[0].activation,
            layer_activations: Some(self.layers[..self.layers.len() - 1].iter().map(|l| l.activation).collect()),
            eta_z: self.eta_z,
            eta_w: self.eta_w,
            use_bias: self.use_bias,
            update_order: self.update_order,
            seed: self.seed,
            top_prior: Some(self.prior.as_slice().to_vec()),
        }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.biases
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn prior(&self) -> &DVector<f64> {
        &self.prior
    }

    pub fn set_state(&mut self, layer: usize, value: DVector<f64>) -> Result<()> {
        let dim = self.layers.get(layer).ok_or_else(|| Error::Dimension(format!("no layer {layer}")))?.dim;
        if value.len() != dim {
            return Err(Error::Dimension(format!("layer {layer} has width {dim}, got {}", value.len())));
        }
        self.states[layer] = value;
        Ok(())
    }

    /// Replaces weight matrix `layer`; it must keep its shape.
    pub fn set_weight(&mut self, layer: usize, value: DMatrix<f64>) -> Result<()> {
        let w = self.weights.get(layer).ok_or_else(|| Error::Dimension(format!("no weight layer {layer}")))?;
        if w.shape() != value.shape() {
            return Err(Error::Dimension(format!("weight {layer} is {:?}, got {:?}", w.shape(), value.shape())));
        }
        self.weights[layer] = value;
        Ok(())
    }

    pub fn reset_states(&mut self) {
        for s in &mut self.states {
            s.fill(0.0);
        }
    }

    fn pre_activation(&self, l: usize, above: &DVector<f64>) -> DVector<f64> {
        let a = &self.weights[l] * above;
        if self.use_bias {
            a + &self.biases[l]
        } else {
            a
        }
    }

    /// Predictions for every layer; the top entry is the prior.
    pub fn forward_predict(&self) -> Vec<DVector<f64>> {
        let n = self.layers.len();
        let mut out: Vec<DVector<f64>> = (0..n - 1)
            .map(|l| self.layers[l].activation.apply(&self.pre_activation(l, &self.states[l + 1])))
            .collect();
        out.push(self.prior.clone());
        out
    }

    /// Errors `e^ℓ = z^ℓ − ẑ^ℓ` and their total squared norm.
    pub fn compute_errors(&self, predictions: &[DVector<f64>]) -> Result<ErrorField> {
        if predictions.len() != self.states.len() {
            return Err(Error::Dimension(format!("{} predictions for {} layers", predictions.len(), self.states.len())));
        }
        let mut errors = Vec::with_capacity(predictions.len());
        for (l, (z, zh)) in self.states.iter().zip(predictions).enumerate() {
            if z.len() != zh.len() {
                return Err(Error::Dimension(format!("layer {l}: state {} vs prediction {}", z.len(), zh.len())));
            }
            errors.push(z - zh);
        }
        let total = errors.iter().map(|e| e.norm_squared()).sum();
        Ok(ErrorField { errors, total })
    }

    pub fn energy(&self) -> f64 {
        self.compute_errors(&self.forward_predict()).expect("consistent shapes").total
    }

    /// Gradients of `ℒ_pred` at the current states and weights.
    pub fn gradients(&self) -> (ErrorField, Gradients) {
        let preds = self.forward_predict();
        let field = self.compute_errors(&preds).expect("consistent shapes");
        let n = self.layers.len();
        // δ^ℓ = (∂f/∂a)ᵀ 2e^ℓ for predicted layers
        let deltas: Vec<DVector<f64>> =
            (0..n - 1).map(|l| self.layers[l].activation.backprop(&preds[l], &(&field.errors[l] * 2.0))).collect();
        let mut states = Vec::with_capacity(n);
        for l in 0..n {
            let mut g = &field.errors[l] * 2.0;
            if l > 0 {
                g -= self.weights[l - 1].transpose() * &deltas[l - 1];
            }
            states.push(g);
        }
        let weights = (0..n - 1).map(|l| -(&deltas[l] * self.states[l + 1].transpose())).collect();
        let biases = if self.use_bias {
            deltas.iter().map(|d| -d).collect()
        } else {
            deltas.iter().map(|d| DVector::zeros(d.len())).collect()
        };
        (field, Gradients { states, weights, biases })
    }

    /// `k` micro-iterations with layer 1 clamped to `input`.
    pub fn micro_iterate(
        &mut self,
        input: &DVector<f64>,
        k: usize,
        preconditioner: Option<&mut dyn WeightPreconditioner>,
    ) -> Result<MicroTrace> {
        self.micro_iterate_with(input, None, k, preconditioner, None)
    }

    /// Micro-iterations with the bottom layer clamped to `input`, optionally
    /// the top layer clamped to `top`, an optional preconditioner and an
    /// optional reward term.
    pub fn micro_iterate_with(
        &mut self,
        input: &DVector<f64>,
        top: Option<&DVector<f64>>,
        k: usize,
        mut preconditioner: Option<&mut dyn WeightPreconditioner>,
        reward: Option<Reward<'_>>,
    ) -> Result<MicroTrace> {
        if k == 0 {
            return Err(Error::Config("micro_iterate needs k ≥ 1".into()));
        }
        self.set_state(0, input.clone())?;
        let top_layer = self.layers.len() - 1;
        if let Some(t) = top {
            self.set_state(top_layer, t.clone())?;
        }
        let free = |l: usize| l > 0 && !(top.is_some() && l == top_layer);
        let reward_value = |net: &PCNetwork| reward.as_ref().map_or(0.0, |r| r.alpha * r.term.evaluate(net).0);

        let mut losses = Vec::with_capacity(k + 1);
        let mut objective = Vec::with_capacity(k + 1);
        for iteration in 0..k {
            let (field, mut grads) = self.gradients();
            losses.push(field.total);
            objective.push(field.total - reward_value(self));
            if let Some(r) = &reward {
                apply_reward(&mut grads, r, self);
            }
            // state step
            for l in 0..self.states.len() {
                if free(l) {
                    let step = &grads.states[l] * self.eta_z;
                    self.states[l] -= step;
                }
            }
            let grads = match self.update_order {
                UpdateOrder::Simultaneous => grads,
                UpdateOrder::StatesFirst => {
                    let (_, mut g) = self.gradients();
                    if let Some(r) = &reward {
                        apply_reward(&mut g, r, self);
                    }
                    g
                }
            };
            // weight step
            for l in 0..self.weights.len() {
                let g = match preconditioner.as_deref_mut() {
                    Some(p) => p.precondition(l, self, &grads.weights[l])?,
                    None => grads.weights[l].clone(),
                };
                self.weights[l] -= g * self.eta_w;
                if self.use_bias {
                    self.biases[l] -= &grads.biases[l] * self.eta_w;
                }
            }
            self.check_finite(iteration)?;
        }
        let (field, _) = self.gradients();
        losses.push(field.total);
        objective.push(field.total - reward_value(self));
        Ok(MicroTrace { losses, objective, final_errors: field })
    }

    fn check_finite(&self, iteration: usize) -> Result<()> {
        for l in 0..self.layers.len() {
            let bad_state = self.states[l].iter().any(|x| !x.is_finite());
            let bad_weight = l < self.weights.len()
                && (self.weights[l].iter().any(|x| !x.is_finite()) || self.biases[l].iter().any(|x| !x.is_finite()));
            if bad_state || bad_weight {
                return Err(Error::Divergence { iteration, layer: l + 1 });
            }
        }
        Ok(())
    }

    /// Top-down sweep from a top-layer input: `z^ℓ = f_ℓ(W^ℓ z^{ℓ+1} + b^ℓ)`.
    pub fn feedforward(&self, top: &DVector<f64>) -> Result<Sweep> {
        let n = self.layers.len();
        if top.len() != self.layers[n - 1].dim {
            return Err(Error::Dimension(format!("top input has {} entries, layer has {}", top.len(), self.layers[n - 1].dim)));
        }
        let mut values = vec![DVector::zeros(0); n];
        values[n - 1] = top.clone();
        for l in (0..n - 1).rev() {
            values[l] = self.layers[l].activation.apply(&self.pre_activation(l, &values[l + 1]));
        }
        Ok(Sweep { values })
    }

    /// Sets every state to the values of a top-down sweep.
    pub fn settle_feedforward(&mut self, top: &DVector<f64>) -> Result<()> {
        self.states = self.feedforward(top)?.values;
        Ok(())
    }

    /// Exact gradients of a scalar loss of the sweep output given
    /// `d_out = ∂loss/∂output`. Returns weight and bias gradients and the
    /// gradient with respect to the top input.
    pub fn backprop(&self, sweep: &Sweep, d_out: &DVector<f64>) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>, DVector<f64>) {
        let n = self.layers.len();
        let mut dw = vec![DMatrix::zeros(0, 0); n - 1];
        let mut db = vec![DVector::zeros(0); n - 1];
        let mut upstream = d_out.clone();
        for l in 0..n - 1 {
            let delta = self.layers[l].activation.backprop(&sweep.values[l], &upstream);
            dw[l] = &delta * sweep.values[l + 1].transpose();
            db[l] = if self.use_bias { delta.clone() } else { DVector::zeros(delta.len()) };
            upstream = self.weights[l].transpose() * delta;
        }
        (dw, db, upstream)
    }
}

fn apply_reward(grads: &mut Gradients, r: &Reward<'_>, net: &PCNetwork) {
    let (_, ds, dw) = r.term.evaluate(net);
    for (g, d) in grads.states.iter_mut().zip(ds) {
        *g -= d * r.alpha;
    }
    for (g, d) in grads.weights.iter_mut().zip(dw) {
        *g -= d * r.alpha;
    }
}
