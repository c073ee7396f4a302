mod common;

use actpc_geom::approximator::{
    ensemble_predict, extract_features, load_dataset, mean_baseline_mse, recalibrate, save_dataset, train_approximator,
    ApproximatorConfig, ApproximatorNet, EmbeddingPredictor, SyntheticFamily, TrainingMode, TrainingPair,
    FEATURE_DIM_V1,
};
use actpc_geom::embedding::{decode_to_operator, KernelItem};
use actpc_geom::geometry::{
    build_laplacian, metric_tensor, pinv_dense, pinv_lowrank, Distribution, GroundMetricGraph, PinvOperator,
    DEFAULT_DAMPING,
};
use actpc_geom::util::softmax;
use actpc_geom::Error;
use common::{random_distribution, random_graph};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

fn quick_cfg(seed: u64, epochs: usize) -> ApproximatorConfig {
    ApproximatorConfig { seed, epochs, ..ApproximatorConfig::default() }
}

#[test]
fn uniform_on_symmetric_graph_has_max_entropy_and_balanced_moments() {
    let g = GroundMetricGraph::path(5).unwrap();
    let f = extract_features(&Distribution::uniform(5).unwrap(), &g).unwrap();
    assert_eq!(f.len(), FEATURE_DIM_V1);
    assert!((f[8] - 5f64.ln()).abs() < 1e-12);
    // first spectral coordinate is antisymmetric on a path
    assert!(f[0].abs() < 1e-10);
    assert!(f[2].abs() < 1e-10);
    assert!(f[4].abs() < 1e-10);
}

#[test]
fn point_mass_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = random_graph(&mut rng, 6);
    let f = extract_features(&Distribution::point_mass(6, 2).unwrap(), &g).unwrap();
    assert_eq!(f[8], 0.0);
    assert_eq!(f[9], 1.0);
    assert_eq!(f.rows(13, 8).sum(), 1.0);
}

#[test]
fn features_are_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..30 {
        let n = rng.random_range(4..10);
        let g = random_graph(&mut rng, n);
        let p = random_distribution(&mut rng, n);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let a = extract_features(&p, &g).unwrap();
        let b = extract_features(&p.permuted(&perm).unwrap(), &g.permuted(&perm).unwrap()).unwrap();
        assert!((a - b).amax() < 1e-10);
    }
}

fn random_pairs(rng: &mut ChaCha8Rng, count: usize, map: &DMatrix<f64>) -> Vec<TrainingPair> {
    (0..count)
        .map(|_| {
            let f = DVector::from_fn(map.ncols(), |_, _| rng.random_range(-1.0..1.0));
            TrainingPair { embedding: map * &f, features: f }
        })
        .collect()
}

#[test]
fn constant_targets_are_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<TrainingPair> = (0..8)
        .map(|_| TrainingPair {
            features: DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0)),
            embedding: DVector::from_vec(vec![0.3, -0.2]),
        })
        .collect();
    let cfg = ApproximatorConfig { learning_rate: 0.05, ..quick_cfg(3, 800) };
    let (net, trace) = train_approximator(&data, &cfg).unwrap();
    assert!(*trace.last().unwrap() < 1e-6, "{}", trace.last().unwrap());
    assert!(net.loss(&data).unwrap() < 1e-6);
}

#[test]
fn linear_map_beats_mean_baseline_tenfold() {
    for mode in [TrainingMode::PredictiveCoding, TrainingMode::Backprop] {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let map = DMatrix::from_fn(4, 12, |_, _| rng.random_range(-0.5..0.5));
        let train = random_pairs(&mut rng, 80, &map);
        let test = random_pairs(&mut rng, 20, &map);
        let cfg = ApproximatorConfig { mode, ..quick_cfg(4, 200) };
        let (net, _) = train_approximator(&train, &cfg).unwrap();
        let mse = net.loss(&test).unwrap();
        let base = mean_baseline_mse(&train, &test);
        assert!(mse < 0.1 * base, "{mode:?}: {mse} vs {base}");
    }
}

#[test]
fn zero_epochs_returns_initialization() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let map = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0));
    let data = random_pairs(&mut rng, 10, &map);
    let cfg = quick_cfg(5, 0);
    let (net, trace) = train_approximator(&data, &cfg).unwrap();
    assert!(trace.is_empty());
    assert_eq!(net, ApproximatorNet::init(&data, &cfg).unwrap());
    assert!(matches!(train_approximator(&[], &cfg), Err(Error::Empty(_))));
}

#[test]
fn divergent_training_reports_epoch() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let map = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-50.0..50.0));
    let data = random_pairs(&mut rng, 10, &map);
    let cfg = ApproximatorConfig { learning_rate: 5.0, mode: TrainingMode::Backprop, ..quick_cfg(6, 50) };
    assert!(matches!(train_approximator(&data, &cfg), Err(Error::TrainingDivergence { .. })));
}

#[test]
fn reconstruction_on_training_distributions_tracks_decode_oracle() {
    let setup = SyntheticFamily::v1().build(7).unwrap();
    let (net, _) = train_approximator(&setup.train_pairs(), &quick_cfg(7, 300)).unwrap();
    let mut within = 0;
    for &i in &setup.train {
        let p = &setup.distributions[i];
        let full = pinv_dense(&build_laplacian(p, &setup.graph).unwrap()).unwrap();
        let oracle = decode_to_operator(&setup.pairs[i].embedding, &setup.basis, &setup.codebook, setup.decode.temperature, setup.decode.rank).unwrap();
        let rec = net.predict_and_reconstruct(p, &setup.graph, &setup.basis, &setup.codebook, &setup.decode).unwrap();
        let e_oracle = (oracle.to_dense() - &full).norm();
        let e_rec = (rec.to_dense() - &full).norm();
        if e_rec <= 2.0 * e_oracle {
            within += 1;
        }
    }
    assert!(within * 10 >= setup.train.len() * 9, "{within}/{}", setup.train.len());
}

#[test]
fn untrained_reconstruction_is_a_valid_operator() {
    let setup = SyntheticFamily::v1().build(8).unwrap();
    let net = ApproximatorNet::init(&setup.train_pairs(), &quick_cfg(8, 0)).unwrap();
    for p in setup.distributions.iter().take(8) {
        let rec = net.predict_and_reconstruct(p, &setup.graph, &setup.basis, &setup.codebook, &setup.decode).unwrap();
        rec.validate().unwrap();
        let dense = rec.to_dense();
        assert!((&dense - dense.transpose()).amax() < 1e-12);
    }
}

#[test]
fn nearly_equal_distributions_reconstruct_identically() {
    let setup = SyntheticFamily::v1().build(9).unwrap();
    let (net, _) = train_approximator(&setup.train_pairs(), &quick_cfg(9, 20)).unwrap();
    let p = &setup.distributions[0];
    let mut w = p.weights().clone();
    w[0] += 2e-10;
    w[1] -= 2e-10;
    let q = Distribution::new(w).unwrap();
    let a = net.predict_and_reconstruct(p, &setup.graph, &setup.basis, &setup.codebook, &setup.decode).unwrap();
    let a2 = net.predict_and_reconstruct(p, &setup.graph, &setup.basis, &setup.codebook, &setup.decode).unwrap();
    let b = net.predict_and_reconstruct(&q, &setup.graph, &setup.basis, &setup.codebook, &setup.decode).unwrap();
    assert_eq!(a, a2);
    assert!((a.to_dense() - b.to_dense()).amax() < 1e-7);
}

#[test]
fn reconstructions_feed_metric_without_escalation() {
    let setup = SyntheticFamily::v1().build(10).unwrap();
    let (net, _) = train_approximator(&setup.train_pairs(), &quick_cfg(10, 200)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut clean = 0;
    for _ in 0..100 {
        let t = setup.sample_params(&mut rng);
        let p = setup.distribution(&t).unwrap();
        let rec = net.predict_and_reconstruct(&p, &setup.graph, &setup.basis, &setup.codebook, &setup.decode).unwrap();
        assert!(rec.sigma.iter().all(|s| *s >= 0.0));
        let g = metric_tensor(PinvOperator::Factors(&rec), &setup.jacobian(&t), DEFAULT_DAMPING).unwrap();
        if g.escalations == 0 {
            clean += 1;
        }
    }
    assert!(clean >= 95, "{clean}");
}

#[test]
fn recalibration_contracts() {
    let setup = SyntheticFamily::v1().build(11).unwrap();
    let (net, _) = train_approximator(&setup.train_pairs(), &quick_cfg(11, 150)).unwrap();
    let fresh: Vec<(Distribution, _)> = setup
        .train
        .iter()
        .take(8)
        .map(|&i| (setup.distributions[i].clone(), setup.items[i].factors().unwrap().clone()))
        .collect();
    assert_eq!(recalibrate(&net, &fresh, &setup.graph, &setup.basis, 0).unwrap(), net);

    let pairs: Vec<TrainingPair> = setup.train.iter().take(8).map(|&i| setup.pairs[i].clone()).collect();
    let before = net.loss(&pairs).unwrap();
    let after = recalibrate(&net, &fresh, &setup.graph, &setup.basis, 30).unwrap().loss(&pairs).unwrap();
    assert!(after <= before * 1.05);
    assert!((before - after).abs() < 1e-6 || before > 1e-4, "already fit: {before} -> {after}");
}

#[test]
fn recalibration_recovers_from_distribution_shift() {
    let setup = SyntheticFamily::v1().build(12).unwrap();
    let (net, _) = train_approximator(&setup.train_pairs(), &quick_cfg(12, 150)).unwrap();
    // shifted family: sharper logits with reversed node roles
    let shifted_map = DMatrix::from_fn(setup.graph.n(), 2, |i, j| -2.5 * setup.logit_map[(setup.graph.n() - 1 - i, j)]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let fresh: Vec<(Distribution, _)> = (0..16)
        .map(|_| {
            let t = setup.sample_params(&mut rng);
            let p = Distribution::new(softmax(&(&shifted_map * &t))).unwrap();
            let f = pinv_lowrank(&build_laplacian(&p, &setup.graph).unwrap(), setup.graph.n() - 1).unwrap().factors;
            (p, f)
        })
        .collect();
    let pairs: Vec<TrainingPair> = fresh
        .iter()
        .map(|(p, f)| TrainingPair {
            features: setup.features(p).unwrap(),
            embedding: setup
                .basis
                .project(&KernelItem::Operator { factors: f.clone(), distribution: p.clone() })
                .unwrap(),
        })
        .collect();
    let before = net.loss(&pairs).unwrap();
    let after = recalibrate(&net, &fresh, &setup.graph, &setup.basis, 100).unwrap().loss(&pairs).unwrap();
    assert!(after <= 0.8 * before, "{before} -> {after}");
}

struct Identity(usize);

impl EmbeddingPredictor for Identity {
    fn output_dim(&self) -> usize {
        self.0
    }
    fn predict(&self, input: &DVector<f64>) -> actpc_geom::Result<DVector<f64>> {
        Ok(input.clone())
    }
}

#[test]
fn ensemble_examples() {
    let setup = SyntheticFamily::v1().build(13).unwrap();
    let (n0, _) = train_approximator(&setup.train_pairs(), &quick_cfg(13, 10)).unwrap();
    let n1 = Identity(4);
    let n2 = Identity(4);
    let f = setup.pairs[0].features.clone();
    let x1 = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
    let members: [&dyn EmbeddingPredictor; 3] = [&n0, &n1, &n2];
    let out = ensemble_predict(&members, &[f.clone(), x1.clone(), x1.clone()], &[1.0, 0.0, 0.0]).unwrap();
    assert_eq!(out, n0.predict(&f).unwrap());
    let same = ensemble_predict(&[&n1, &n1, &n1], &[x1.clone(), x1.clone(), x1.clone()], &[0.5, 0.25, 0.25]).unwrap();
    assert!((same - &x1).amax() < 1e-15);
    let short = Identity(3);
    assert!(matches!(
        ensemble_predict(&[&n1, &short], &[x1.clone(), DVector::zeros(3)], &[0.5, 0.5]),
        Err(Error::Dimension(_))
    ));
    assert!(ensemble_predict(&[&n1, &n2], &[x1.clone(), x1.clone()], &[0.7, 0.7]).is_err());
}

#[test]
fn ensemble_of_noisy_replicas_beats_each_member() {
    let normal = rand_distr::Normal::new(0.0, 0.3).unwrap();
    let member = Identity(4);
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut member_mse = [0.0; 3];
        let mut ens_mse = 0.0;
        for _ in 0..100 {
            let truth = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let inputs: Vec<DVector<f64>> =
                (0..3).map(|_| &truth + DVector::from_fn(4, |_, _| rand_distr::Distribution::sample(&normal, &mut rng))).collect();
            for k in 0..3 {
                member_mse[k] += (&inputs[k] - &truth).norm_squared();
            }
            let out = ensemble_predict(&[&member, &member, &member], &inputs, &[1.0 / 3.0; 3]).unwrap();
            ens_mse += (out - &truth).norm_squared();
        }
        let best = member_mse.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(ens_mse <= best, "seed {seed}");
    }
}

#[test]
fn training_is_bit_deterministic() {
    let setup = SyntheticFamily::v1().build(14).unwrap();
    let (a, ta) = train_approximator(&setup.train_pairs(), &quick_cfg(14, 20)).unwrap();
    let setup2 = SyntheticFamily::v1().build(14).unwrap();
    let (b, tb) = train_approximator(&setup2.train_pairs(), &quick_cfg(14, 20)).unwrap();
    assert_eq!(ta, tb);
    assert_eq!(a, b);
}

#[test]
fn dataset_jsonl_round_trip() {
    let setup = SyntheticFamily::v1().build(15).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    save_dataset(&path, &setup.pairs).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), setup.pairs.len());
    assert_eq!(load_dataset(&path).unwrap(), setup.pairs);
}

#[test]
fn net_checkpoint_uses_pc_format() {
    let setup = SyntheticFamily::v1().build(16).unwrap();
    let (net, _) = train_approximator(&setup.train_pairs(), &quick_cfg(16, 5)).unwrap();
    let mut buf = Vec::new();
    net.net.save_checkpoint(&mut buf).unwrap();
    let back = actpc_geom::pc_net::PCNetwork::load_checkpoint(&buf[..]).unwrap();
    assert_eq!(back, net.net);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn features_are_finite_and_fixed_length(seed in 0u64..10_000, n in 3usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n);
        let p = random_distribution(&mut rng, n);
        let f = extract_features(&p, &g).unwrap();
        prop_assert_eq!(f.len(), FEATURE_DIM_V1);
        prop_assert!(f.iter().all(|x| x.is_finite()));
    }
}
