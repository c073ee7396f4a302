use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::features::{extract_features_with, spectral_coordinates};
use super::net::{ApproximatorNet, DecodeParams, TrainingPair};
use crate::embedding::{gram_matrix, nystrom_fit, Codebook, EmbeddingBasis, KernelItem, KernelSpec};
use crate::error::{Error, Result};
use crate::factor::FactorTriple;
use crate::geometry::{
    build_laplacian, metric_tensor, natural_direction, pinv_dense, pinv_lowrank, softmax_jacobian, w2_exact,
    w2_squared_gradient, Distribution, GroundMetricGraph, PinvOperator, DEFAULT_DAMPING,
};
use crate::util::{angle_degrees, derive_seed, median, rng, softmax};

/// Versioned synthetic task for the approximator.
///
/// Version 1: `nodes` random planar points in the unit square; a 2-parameter
/// model `p(t) = softmax(A t)` with Gaussian `A` (scale 1.5) and
/// `t ~ U[−1, 1]²`; `items` operators `L(p)†` at rank `nodes − 1`; a
/// Wasserstein-Gaussian kernel with `α = 1 / median W2²`; Nyström on
/// `landmarks` of the training items with output dimension `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticFamily {
    pub version: u32,
    pub nodes: usize,
    pub items: usize,
    pub train_items: usize,
    pub landmarks: usize,
    pub d: usize,
    /// Decode temperature as a fraction of the median squared distance
    /// between landmark embeddings.
    pub temperature_fraction: f64,
}

impl SyntheticFamily {
    pub fn v1() -> Self {
        Self { version: 1, nodes: 6, items: 64, train_items: 48, landmarks: 32, d: 4, temperature_fraction: 0.05 }
    }
}

/// Everything derived from one seed of a [`SyntheticFamily`].
#[derive(Clone, Debug)]
pub struct FamilySetup {
    pub family: SyntheticFamily,
    pub seed: u64,
    pub graph: GroundMetricGraph,
    pub coords: DMatrix<f64>,
    /// The `A` in `p(t) = softmax(A t)`.
    pub logit_map: DMatrix<f64>,
    pub params: Vec<DVector<f64>>,
    pub distributions: Vec<Distribution>,
    pub items: Vec<KernelItem>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub alpha: f64,
    pub basis: EmbeddingBasis,
    pub codebook: Codebook,
    /// One pair per item, aligned with `items`.
    pub pairs: Vec<TrainingPair>,
    pub decode: DecodeParams,
}

impl FamilySetup {
    pub fn distribution(&self, t: &DVector<f64>) -> Result<Distribution> {
        Distribution::new(softmax(&(&self.logit_map * t)))
    }

    /// Operator item at full pseudo-inverse rank for `p`.
    pub fn item(&self, p: &Distribution) -> Result<KernelItem> {
        let l = build_laplacian(p, &self.graph)?;
        let factors = pinv_lowrank(&l, self.graph.n() - 1)?.factors;
        Ok(KernelItem::Operator { factors, distribution: p.clone() })
    }

    pub fn features(&self, p: &Distribution) -> Result<DVector<f64>> {
        extract_features_with(p, &self.graph, &self.coords)
    }

    pub fn train_pairs(&self) -> Vec<TrainingPair> {
        self.train.iter().map(|&i| self.pairs[i].clone()).collect()
    }

    pub fn test_pairs(&self) -> Vec<TrainingPair> {
        self.test.iter().map(|&i| self.pairs[i].clone()).collect()
    }

    pub fn sample_params(&self, r: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(2, |_, _| r.random_range(-1.0..=1.0))
    }

    /// Jacobian of `p(t) = softmax(A t)` with respect to `t`.
    pub fn jacobian(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let p = softmax(&(&self.logit_map * t));
        softmax_jacobian(&p) * &self.logit_map
    }

    /// Natural-gradient directions of `W2²(p(t), target)` under the exact
    /// `L(p)†` and under `approx`.
    pub fn natural_directions(
        &self,
        t: &DVector<f64>,
        target: &Distribution,
        approx: &FactorTriple,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let p = self.distribution(t)?;
        let j = self.jacobian(t);
        let (_, grad) = w2_squared_gradient(&p, target, &self.graph, &j)?;
        let exact = pinv_dense(&build_laplacian(&p, &self.graph)?)?;
        let g_exact = metric_tensor(PinvOperator::Dense(&exact), &j, DEFAULT_DAMPING)?;
        let g_approx = metric_tensor(PinvOperator::Factors(approx), &j, DEFAULT_DAMPING)?;
        Ok((natural_direction(&grad, &g_exact)?, natural_direction(&grad, &g_approx)?))
    }

    /// Angles in degrees between exact and reconstructed natural-gradient
    /// directions at `samples` random parameter points, each against a random
    /// target from the family.
    pub fn direction_angles(&self, net: &ApproximatorNet, samples: usize, seed: u64) -> Result<Vec<f64>> {
        let mut r = rng(derive_seed(seed, "direction-fidelity"));
        let mut out = Vec::with_capacity(samples);
        for _ in 0..samples {
            let t = self.sample_params(&mut r);
            let target = self.distribution(&self.sample_params(&mut r))?;
            let p = self.distribution(&t)?;
            let approx = net.predict_and_reconstruct(&p, &self.graph, &self.basis, &self.codebook, &self.decode)?;
            let (a, b) = self.natural_directions(&t, &target, &approx)?;
            out.push(angle_degrees(&a, &b));
        }
        Ok(out)
    }
}

impl SyntheticFamily {
    pub fn build(&self, seed: u64) -> Result<FamilySetup> {
        if self.version != 1 {
            return Err(Error::Config(format!("unknown synthetic family version {}", self.version)));
        }
        if self.train_items > self.items || self.landmarks > self.train_items || self.d > self.landmarks || self.nodes < 3 {
            return Err(Error::Config("inconsistent synthetic family sizes".into()));
        }
        let mut r = rng(derive_seed(seed, "synthetic-family-v1"));
        let points: Vec<DVector<f64>> = (0..self.nodes).map(|_| DVector::from_fn(2, |_, _| r.random::<f64>())).collect();
        let graph = GroundMetricGraph::from_points(&points)?;
        let logit_map = DMatrix::from_fn(self.nodes, 2, |_, _| { let x: f64 = StandardNormal.sample(&mut r); 1.5 * x });
        let coords = spectral_coordinates(&graph);

        let mut setup = FamilySetup {
            family: self.clone(),
            seed,
            graph,
            coords,
            logit_map,
            params: Vec::new(),
            distributions: Vec::new(),
            items: Vec::new(),
            train: Vec::new(),
            test: Vec::new(),
            alpha: 1.0,
            basis: placeholder_basis(),
            codebook: Codebook { operators: vec![] },
            pairs: Vec::new(),
            decode: DecodeParams { temperature: 1.0, rank: self.nodes - 1 },
        };
        for _ in 0..self.items {
            let t = setup.sample_params(&mut r);
            let p = setup.distribution(&t)?;
            setup.items.push(setup.item(&p)?);
            setup.distributions.push(p);
            setup.params.push(t);
        }
        let mut order: Vec<usize> = (0..self.items).collect();
        order.shuffle(&mut r);
        setup.train = order[..self.train_items].to_vec();
        setup.test = order[self.train_items..].to_vec();

        let mut sq = Vec::new();
        for i in 0..self.items {
            for j in (i + 1)..self.items {
                let (w, _) = w2_exact(&setup.distributions[i], &setup.distributions[j], &setup.graph)?;
                sq.push(w * w);
            }
        }
        let med = median(&sq).unwrap_or(1.0);
        setup.alpha = if med > 0.0 { 1.0 / med } else { 1.0 };

        let spec = KernelSpec::WassersteinGaussian { alpha: setup.alpha, graph: setup.graph.clone() };
        let train_items: Vec<KernelItem> = setup.train.iter().map(|&i| setup.items[i].clone()).collect();
        let mut basis = nystrom_fit(&train_items, &spec, self.landmarks, self.d, derive_seed(seed, "synthetic-landmarks"))?;
        // report landmark positions relative to the full item list
        basis.landmark_indices = basis.landmark_indices.iter().map(|&k| setup.train[k]).collect();
        setup.codebook = Codebook::from_basis(&basis)?;

        let anchors = basis.training_embeddings();
        let mut dists = Vec::new();
        for i in 0..anchors.len() {
            for j in (i + 1)..anchors.len() {
                dists.push((&anchors[i] - &anchors[j]).norm_squared());
            }
        }
        setup.decode.temperature = (self.temperature_fraction * median(&dists).unwrap_or(1.0)).max(1e-12);

        setup.pairs = setup
            .items
            .iter()
            .zip(&setup.distributions)
            .map(|(item, p)| Ok(TrainingPair { features: setup.features(p)?, embedding: basis.project(item)? }))
            .collect::<Result<Vec<_>>>()?;
        setup.basis = basis;
        Ok(setup)
    }
}

fn placeholder_basis() -> EmbeddingBasis {
    EmbeddingBasis {
        spec: KernelSpec::FlattenedRbf { sigma: 1.0 },
        landmark_indices: vec![],
        landmarks: vec![],
        eigvals: DVector::zeros(0),
        eigvecs: DMatrix::zeros(0, 0),
        d: 0,
        rank: 0,
        singular: false,
        gram_error: None,
        seed: 0,
        items_seen: 0,
        cap: None,
    }
}

/// Mean squared error of predicting the training mean on `test`.
pub fn mean_baseline_mse(train: &[TrainingPair], test: &[TrainingPair]) -> f64 {
    if train.is_empty() || test.is_empty() {
        return 0.0;
    }
    let d = train[0].embedding.len();
    let mean = train.iter().fold(DVector::zeros(d), |a, p| a + &p.embedding) / train.len() as f64;
    test.iter().map(|p| (&p.embedding - &mean).norm_squared()).sum::<f64>() / test.len() as f64
}

/// Gram matrix of the family's items under its kernel (for diagnostics).
pub fn family_gram(setup: &FamilySetup) -> Result<DMatrix<f64>> {
    gram_matrix(&setup.items, &setup.basis.spec)
}
