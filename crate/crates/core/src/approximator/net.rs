use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ensemble::EmbeddingPredictor;
use super::features::{extract_features_with, spectral_coordinates, FeatureRecipe};
use crate::embedding::{decode_to_operator, Codebook, EmbeddingBasis, KernelItem};
use crate::error::{Error, Result};
use crate::factor::FactorTriple;
use crate::geometry::{Distribution, GroundMetricGraph};
use crate::pc_net::{Activation, PCConfig, PCNetwork, UpdateOrder};
use crate::util::{derive_seed, rng};

/// How the approximator's weights are trained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Predictive coding: bottom layer clamped to the target, top layer to
    /// the features, local updates through `micro_iterate`.
    #[default]
    PredictiveCoding,
    /// Exact gradient of the squared error through the top-down sweep.
    Backprop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApproximatorConfig {
    pub recipe: FeatureRecipe,
    pub mode: TrainingMode,
    /// Hidden widths from the output side towards the input side.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Micro-iterations per sample in predictive-coding mode.
    pub micro_iterations: usize,
    pub state_rate: f64,
    pub seed: u64,
    /// Recalibration fires every this many online steps; `None` disables it.
    pub recalibration_interval: Option<usize>,
}

impl Default for ApproximatorConfig {
    fn default() -> Self {
        Self {
            recipe: FeatureRecipe::V1,
            mode: TrainingMode::PredictiveCoding,
            hidden: vec![24],
            epochs: 300,
            learning_rate: 0.01,
            micro_iterations: 4,
            state_rate: 0.2,
            seed: 0,
            recalibration_interval: None,
        }
    }
}

/// One supervised example: a feature vector and its target embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub features: DVector<f64>,
    pub embedding: DVector<f64>,
}

/// Trained map from features to embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproximatorNet {
    pub net: PCNetwork,
    pub config: ApproximatorConfig,
    pub feature_mean: DVector<f64>,
    pub feature_scale: DVector<f64>,
}

impl ApproximatorNet {
    /// Untrained network with feature standardization fitted to `dataset`.
    pub fn init(dataset: &[TrainingPair], config: &ApproximatorConfig) -> Result<Self> {
        let first = dataset.first().ok_or_else(|| Error::Empty("training set is empty".into()))?;
        let (fd, d) = (first.features.len(), first.embedding.len());
        if dataset.iter().any(|p| p.features.len() != fd || p.embedding.len() != d) {
            return Err(Error::Dimension("training pairs have inconsistent lengths".into()));
        }
        let n = dataset.len() as f64;
        let mean = dataset.iter().fold(DVector::zeros(fd), |a, p| a + &p.features) / n;
        let var = dataset.iter().fold(DVector::zeros(fd), |a: DVector<f64>, p| a + (&p.features - &mean).map(|x| x * x)) / n;
        let scale = var.map(|v| if v > 1e-20 { v.sqrt() } else { 1.0 });

        let mut layers = vec![d];
        layers.extend(&config.hidden);
        layers.push(fd);
        let mut acts = vec![Activation::Identity];
        acts.extend(std::iter::repeat_n(Activation::Tanh, config.hidden.len()));
        let mut pc = PCConfig::new(layers, Activation::Identity, config.state_rate, config.learning_rate, derive_seed(config.seed, "approximator-init"));
        pc.layer_activations = Some(acts);
        pc.use_bias = true;
        pc.update_order = UpdateOrder::Simultaneous;
        Ok(Self { net: PCNetwork::new(&pc)?, config: config.clone(), feature_mean: mean, feature_scale: scale })
    }

    pub fn output_dim(&self) -> usize {
        self.net.layers()[0].dim
    }

    fn standardize(&self, f: &DVector<f64>) -> DVector<f64> {
        (f - &self.feature_mean).component_div(&self.feature_scale)
    }

    /// `f_θ(features)`.
    pub fn predict(&self, features: &DVector<f64>) -> Result<DVector<f64>> {
        if features.len() != self.feature_mean.len() {
            return Err(Error::Dimension(format!("expected {} features, got {}", self.feature_mean.len(), features.len())));
        }
        Ok(self.net.feedforward(&self.standardize(features))?.output().clone())
    }

    /// Mean squared error (per sample, summed over output coordinates).
    pub fn loss(&self, data: &[TrainingPair]) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for p in data {
            total += (self.predict(&p.features)? - &p.embedding).norm_squared();
        }
        Ok(total / data.len() as f64)
    }

    /// One update on one pair; returns the pre-update squared error.
    fn step(&mut self, pair: &TrainingPair) -> Result<f64> {
        let x = self.standardize(&pair.features);
        let sweep = self.net.feedforward(&x)?;
        let loss = (sweep.output() - &pair.embedding).norm_squared();
        match self.config.mode {
            TrainingMode::PredictiveCoding => {
                self.net.settle_feedforward(&x)?;
                self.net.micro_iterate_with(&pair.embedding, Some(&x), self.config.micro_iterations.max(1), None, None)?;
            }
            TrainingMode::Backprop => {
                let d_out = (sweep.output() - &pair.embedding) * 2.0;
                let (dw, db, _) = self.net.backprop(&sweep, &d_out);
                let eta = self.config.learning_rate;
                for (w, g) in self.net.weights_mut().iter_mut().zip(&dw) {
                    *w -= g * eta;
                }
                for (b, g) in self.net.biases_mut().iter_mut().zip(&db) {
                    *b -= g * eta;
                }
            }
        }
        Ok(loss)
    }

    /// Decodes `f_θ(features(p))` to an operator.
    pub fn predict_and_reconstruct(
        &self,
        p: &Distribution,
        g: &GroundMetricGraph,
        basis: &EmbeddingBasis,
        codebook: &Codebook,
        decode: &DecodeParams,
    ) -> Result<FactorTriple> {
        let f = extract_features_with(p, g, &spectral_coordinates(g))?;
        let z = self.predict(&f)?;
        decode_to_operator(&z, basis, codebook, decode.temperature, decode.rank)
    }
}

impl EmbeddingPredictor for ApproximatorNet {
    fn output_dim(&self) -> usize {
        ApproximatorNet::output_dim(self)
    }

    fn predict(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        ApproximatorNet::predict(self, input)
    }
}

/// Decode settings used at inference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub rank: usize,
}

/// Trains `f_θ` to minimize `‖z − f_θ(features)‖²`. Returns the network and
/// the mean pre-update loss of every epoch.
pub fn train_approximator(dataset: &[TrainingPair], config: &ApproximatorConfig) -> Result<(ApproximatorNet, Vec<f64>)> {
    let mut net = ApproximatorNet::init(dataset, config)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut r = rng(derive_seed(config.seed, "approximator-order"));
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut r);
        let mut total = 0.0;
        for &i in &order {
            total += net.step(&dataset[i]).map_err(|e| match e {
                Error::Divergence { .. } => Error::TrainingDivergence { epoch },
                other => other,
            })?;
        }
        let mean = total / dataset.len() as f64;
        if !mean.is_finite() {
            return Err(Error::TrainingDivergence { epoch });
        }
        trace.push(mean);
    }
    Ok((net, trace))
}

/// Fine-tunes on freshly factorized ground truths.
///
/// Targets are the basis projections of the fresh operators. `steps` single
/// pair updates are taken in a fixed cycle; the returned network is the best
/// snapshot by loss on the fresh pairs, so that loss never increases.
pub fn recalibrate(
    net: &ApproximatorNet,
    fresh: &[(Distribution, FactorTriple)],
    g: &GroundMetricGraph,
    basis: &EmbeddingBasis,
    steps: usize,
) -> Result<ApproximatorNet> {
    if steps == 0 || fresh.is_empty() {
        return Ok(net.clone());
    }
    let coords = spectral_coordinates(g);
    let pairs = fresh
        .iter()
        .map(|(p, f)| {
            let item = KernelItem::Operator { factors: f.clone(), distribution: p.clone() };
            Ok(TrainingPair { features: extract_features_with(p, g, &coords)?, embedding: basis.project(&item)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = net.clone();
    let mut best_loss = net.loss(&pairs)?;
    let mut cur = net.clone();
    for s in 0..steps {
        cur.step(&pairs[s % pairs.len()])?;
        let l = cur.loss(&pairs)?;
        if l < best_loss {
            best_loss = l;
            best = cur.clone();
        }
    }
    Ok(best)
}

/// Writes one JSON object per line.
pub fn save_dataset(path: &Path, data: &[TrainingPair]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in data {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<TrainingPair>> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
