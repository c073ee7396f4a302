use actpc_geom::pc_net::{
    flatten_row_major, Activation, MatrixPreconditioner, PCConfig, PCNetwork, Reward, RewardTerm, UpdateOrder,
    WeightPreconditioner,
};
use actpc_geom::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn net(layers: &[usize], act: Activation, eta_z: f64, eta_w: f64, seed: u64) -> PCNetwork {
    PCNetwork::new(&PCConfig::new(layers.to_vec(), act, eta_z, eta_w, seed)).unwrap()
}

fn randomize_states(n: &mut PCNetwork, rng: &mut ChaCha8Rng) {
    for l in 0..n.num_layers() {
        let d = n.layers()[l].dim;
        n.set_state(l, DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).unwrap();
    }
}

#[test]
fn identity_weights_pass_state_through() {
    let mut n = net(&[3, 3], Activation::Identity, 0.1, 0.1, 1);
    n.set_weight(0, DMatrix::identity(3, 3)).unwrap();
    let v = DVector::from_vec(vec![0.3, -1.0, 2.0]);
    n.set_state(1, v.clone()).unwrap();
    assert_eq!(n.forward_predict()[0], v);
}

#[test]
fn zero_weights_predict_zero() {
    for act in [Activation::Identity, Activation::Tanh] {
        let mut n = net(&[2, 4], act, 0.1, 0.1, 2);
        n.set_weight(0, DMatrix::zeros(2, 4)).unwrap();
        n.set_state(1, DVector::from_element(4, 1.7)).unwrap();
        assert_eq!(n.forward_predict()[0], DVector::zeros(2));
    }
}

#[test]
fn forward_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for act in [Activation::Identity, Activation::Tanh] {
        let mut n = net(&[3, 2, 2], act, 0.1, 0.1, 7);
        randomize_states(&mut n, &mut rng);
        let preds = n.forward_predict();
        for (l, pred) in preds.iter().enumerate().take(2) {
            let w = &n.weights()[l];
            let z = &n.states()[l + 1];
            for i in 0..w.nrows() {
                let mut a = 0.0;
                for j in 0..w.ncols() {
                    a += w[(i, j)] * z[j];
                }
                let expect = if act == Activation::Tanh { a.tanh() } else { a };
                assert!((pred[i] - expect).abs() < 1e-12);
            }
        }
        assert_eq!(preds[2], DVector::zeros(2));
    }
}

#[test]
fn errors_examples() {
    let mut n = net(&[2, 2], Activation::Identity, 0.1, 0.1, 4);
    n.set_weight(0, DMatrix::zeros(2, 2)).unwrap();
    n.set_state(0, DVector::from_vec(vec![1.0, 0.0])).unwrap();
    let f = n.compute_errors(&n.forward_predict()).unwrap();
    assert_eq!(f.errors[0], DVector::from_vec(vec![1.0, 0.0]));
    assert_eq!(f.total, 1.0);

    let preds: Vec<DVector<f64>> = n.states().to_vec();
    let f = n.compute_errors(&preds).unwrap();
    assert_eq!(f.total, 0.0);
    assert!(f.errors.iter().all(|e| e.iter().all(|x| *x == 0.0)));

    let bad = vec![DVector::zeros(3), DVector::zeros(2)];
    assert!(matches!(n.compute_errors(&bad), Err(Error::Dimension(_))));
}

#[test]
fn energy_matches_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let mut n = net(&[5, 4, 3], Activation::Tanh, 0.1, 0.1, seed);
        randomize_states(&mut n, &mut rng);
        let f = n.compute_errors(&n.forward_predict()).unwrap();
        let mut oracle = 0.0;
        for l in 0..2 {
            let a = &n.weights()[l] * &n.states()[l + 1];
            for i in 0..a.len() {
                oracle += (n.states()[l][i] - a[i].tanh()).powi(2);
            }
        }
        oracle += n.states()[2].norm_squared();
        assert!((f.total - oracle).abs() < 1e-12);
        let resum: f64 = f.errors.iter().map(|e| e.norm_squared()).sum();
        assert!((f.total - resum).abs() < 1e-10);
    }
}

#[test]
fn zero_steps_leave_network_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut n = net(&[3, 3, 2], Activation::Tanh, 0.0, 0.0, 9);
    let input = DVector::from_vec(vec![0.5, -0.2, 0.1]);
    randomize_states(&mut n, &mut rng);
    n.set_state(0, input.clone()).unwrap();
    let before = n.clone();
    let t = n.micro_iterate(&input, 6, None).unwrap();
    assert_eq!(n, before);
    assert_eq!(t.losses.len(), 7);
    assert!(t.losses.iter().all(|l| *l == t.losses[0]));
}

#[test]
fn scalar_state_recursion_closed_form() {
    let (w, x, eta, z0) = (0.8, 1.5, 0.05, -0.4);
    let mut n = net(&[1, 1], Activation::Identity, eta, 0.0, 0);
    n.set_weight(0, DMatrix::from_element(1, 1, w)).unwrap();
    n.set_state(1, DVector::from_element(1, z0)).unwrap();
    let input = DVector::from_element(1, x);
    let zstar = w * x / (w * w + 1.0);
    let rho: f64 = 1.0 - 2.0 * eta * (w * w + 1.0);
    for k in 1..=30 {
        n.micro_iterate(&input, 1, None).unwrap();
        let expect = zstar + rho.powi(k) * (z0 - zstar);
        assert!((n.states()[1][0] - expect).abs() < 1e-10, "k={k}");
    }
}

#[test]
fn scalar_weight_recursion_closed_form() {
    let (w0, x, eta, z) = (0.1, 1.2, 0.03, 0.9);
    let mut n = net(&[1, 1], Activation::Identity, 0.0, eta, 0);
    n.set_weight(0, DMatrix::from_element(1, 1, w0)).unwrap();
    n.set_state(1, DVector::from_element(1, z)).unwrap();
    let input = DVector::from_element(1, x);
    let wstar = x / z;
    let rho: f64 = 1.0 - 2.0 * eta * z * z;
    n.micro_iterate(&input, 25, None).unwrap();
    let expect = wstar + rho.powi(25) * (w0 - wstar);
    assert!((n.weights()[0][(0, 0)] - expect).abs() < 1e-10);
}

#[test]
fn linear_trace_non_increasing_over_seeds() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut n = net(&[4, 3, 2], Activation::Identity, 1e-3, 1e-3, seed);
        let input = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let t = n.micro_iterate(&input, 50, None).unwrap();
        for w in t.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "seed {seed}: {} -> {}", w[0], w[1]);
        }
    }
}

fn fd_check(n: &PCNetwork) {
    let (_, g) = n.gradients();
    let h = 1e-6;
    for l in 0..n.weights().len() {
        let mut fd = DMatrix::zeros(n.weights()[l].nrows(), n.weights()[l].ncols());
        for i in 0..fd.nrows() {
            for j in 0..fd.ncols() {
                let mut p = n.clone();
                let mut m = n.clone();
                p.weights_mut()[l][(i, j)] += h;
                m.weights_mut()[l][(i, j)] -= h;
                fd[(i, j)] = (p.energy() - m.energy()) / (2.0 * h);
            }
        }
        let tol = 1e-6f64.max(1e-4 * g.weights[l].norm());
        assert!((&fd - &g.weights[l]).amax() < tol, "layer {l}: {}", (&fd - &g.weights[l]).amax());
    }
    for l in 0..n.num_layers() {
        for i in 0..n.states()[l].len() {
            let mut p = n.clone();
            let mut m = n.clone();
            let mut sp = n.states()[l].clone();
            sp[i] += h;
            p.set_state(l, sp).unwrap();
            let mut sm = n.states()[l].clone();
            sm[i] -= h;
            m.set_state(l, sm).unwrap();
            let fd = (p.energy() - m.energy()) / (2.0 * h);
            assert!((fd - g.states[l][i]).abs() < 1e-6f64.max(1e-4 * g.states[l].norm()));
        }
    }
}

#[test]
fn extended_activations_have_correct_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for act in [Activation::Sigmoid, Activation::Softmax] {
        let mut cfg = PCConfig::new(vec![4, 3, 3], Activation::Tanh, 0.1, 0.1, 5);
        cfg.layer_activations = Some(vec![act, Activation::Tanh]);
        cfg.use_bias = true;
        let mut n = PCNetwork::new(&cfg).unwrap();
        randomize_states(&mut n, &mut rng);
        n.biases_mut()[0] = DVector::from_vec(vec![0.1, -0.3, 0.2, 0.0]);
        fd_check(&n);
    }
}

#[test]
fn identity_preconditioner_is_bit_exact() {
    let input = DVector::from_vec(vec![0.4, -0.7, 0.2, 0.9]);
    for order in [UpdateOrder::Simultaneous, UpdateOrder::StatesFirst] {
        let mut cfg = PCConfig::new(vec![4, 3, 2], Activation::Tanh, 0.05, 0.05, 21);
        cfg.update_order = order;
        let mut a = PCNetwork::new(&cfg).unwrap();
        let mut b = a.clone();
        let mut p = MatrixPreconditioner::identity(&b);
        let ta = a.micro_iterate(&input, 20, None).unwrap();
        let tb = b.micro_iterate(&input, 20, Some(&mut p)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.losses, tb.losses);
    }
}

#[test]
fn zero_error_state_is_fixed_point() {
    let mut n = net(&[3, 2], Activation::Identity, 0.1, 0.1, 8);
    // top state zero matches the prior, bottom input equals W·0 = 0
    let input = DVector::zeros(3);
    let before = n.clone();
    let mut p = MatrixPreconditioner::identity(&n);
    n.micro_iterate(&input, 5, Some(&mut p)).unwrap();
    assert_eq!(n, before);
}

#[test]
fn preconditioner_scales_weight_step() {
    let input = DVector::from_vec(vec![1.0, -1.0]);
    let mut a = net(&[2, 2], Activation::Identity, 0.0, 0.1, 3);
    a.set_state(1, DVector::from_vec(vec![0.5, 0.5])).unwrap();
    let mut b = a.clone();
    let mut p = MatrixPreconditioner { per_layer: vec![Some(DMatrix::identity(4, 4) * 0.5)] };
    let w0 = a.weights()[0].clone();
    a.micro_iterate(&input, 1, None).unwrap();
    b.micro_iterate(&input, 1, Some(&mut p)).unwrap();
    let da = &a.weights()[0] - &w0;
    let db = &b.weights()[0] - &w0;
    assert!((da * 0.5 - db).amax() < 1e-15);

    let mut bad = MatrixPreconditioner { per_layer: vec![Some(DMatrix::identity(3, 3))] };
    assert!(matches!(b.micro_iterate(&input, 1, Some(&mut bad)), Err(Error::Dimension(_))));
}

#[test]
fn divergence_reports_iteration_and_layer() {
    let mut n = net(&[3, 3, 3], Activation::Identity, 50.0, 50.0, 4);
    let input = DVector::from_element(3, 10.0);
    match n.micro_iterate(&input, 500, None) {
        Err(Error::Divergence { iteration, layer }) => {
            assert!(iteration < 500);
            assert!((1..=3).contains(&layer));
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn states_first_order_differs_but_descends() {
    let input = DVector::from_vec(vec![0.3, 0.8, -0.5]);
    let mut cfg = PCConfig::new(vec![3, 2, 2], Activation::Identity, 0.01, 0.01, 13);
    let mut a = PCNetwork::new(&cfg).unwrap();
    cfg.update_order = UpdateOrder::StatesFirst;
    let mut b = PCNetwork::new(&cfg).unwrap();
    let ta = a.micro_iterate(&input, 30, None).unwrap();
    let tb = b.micro_iterate(&input, 30, None).unwrap();
    assert_ne!(a.weights(), b.weights());
    assert!(ta.losses[30] < ta.losses[0]);
    assert!(tb.losses[30] < tb.losses[0]);
}

#[test]
fn top_clamp_holds_top_state() {
    let mut n = net(&[3, 2], Activation::Identity, 0.1, 0.1, 3);
    let top = DVector::from_vec(vec![0.7, -0.2]);
    let input = DVector::from_vec(vec![1.0, 0.0, 0.5]);
    n.micro_iterate_with(&input, Some(&top), 10, None, None).unwrap();
    assert_eq!(n.states()[1], top);
    assert_eq!(n.states()[0], input);
}

struct PullTop {
    target: DVector<f64>,
}

impl RewardTerm for PullTop {
    fn evaluate(&self, net: &PCNetwork) -> (f64, Vec<DVector<f64>>, Vec<DMatrix<f64>>) {
        let top = net.states().last().unwrap();
        let diff = top - &self.target;
        let mut ds: Vec<DVector<f64>> = net.states().iter().map(|s| DVector::zeros(s.len())).collect();
        *ds.last_mut().unwrap() = -&diff * 2.0;
        let dw = net.weights().iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect();
        (-diff.norm_squared(), ds, dw)
    }
}

#[test]
fn reward_pulls_state_toward_its_optimum() {
    let input = DVector::zeros(2);
    let term = PullTop { target: DVector::from_vec(vec![1.0, 1.0]) };
    let mut plain = net(&[2, 2], Activation::Identity, 0.05, 0.0, 2);
    let mut rewarded = plain.clone();
    plain.micro_iterate(&input, 40, None).unwrap();
    let t = rewarded
        .micro_iterate_with(&input, None, 40, None, Some(Reward { alpha: 2.0, term: &term }))
        .unwrap();
    let dist = |n: &PCNetwork| (&n.states()[1] - &term.target).norm();
    assert!(dist(&rewarded) < dist(&plain));
    assert!(t.objective.last().unwrap() < &t.objective[0]);
}

#[test]
fn backprop_matches_finite_differences() {
    let mut cfg = PCConfig::new(vec![3, 4, 2], Activation::Tanh, 0.1, 0.1, 17);
    cfg.layer_activations = Some(vec![Activation::Softmax, Activation::Tanh]);
    cfg.use_bias = true;
    let n = PCNetwork::new(&cfg).unwrap();
    let top = DVector::from_vec(vec![0.4, -0.9]);
    let target = DVector::from_vec(vec![0.2, 0.5, 0.3]);
    let loss = |n: &PCNetwork, top: &DVector<f64>| (n.feedforward(top).unwrap().output() - &target).norm_squared();
    let sweep = n.feedforward(&top).unwrap();
    let d_out = (sweep.output() - &target) * 2.0;
    let (dw, db, dtop) = n.backprop(&sweep, &d_out);
    let h = 1e-6;
    for l in 0..2 {
        for i in 0..dw[l].nrows() {
            for j in 0..dw[l].ncols() {
                let mut p = n.clone();
                p.weights_mut()[l][(i, j)] += h;
                let mut m = n.clone();
                m.weights_mut()[l][(i, j)] -= h;
                let fd = (loss(&p, &top) - loss(&m, &top)) / (2.0 * h);
                assert!((fd - dw[l][(i, j)]).abs() < 1e-7);
            }
            let mut p = n.clone();
            p.biases_mut()[l][i] += h;
            let mut m = n.clone();
            m.biases_mut()[l][i] -= h;
            assert!(((loss(&p, &top) - loss(&m, &top)) / (2.0 * h) - db[l][i]).abs() < 1e-7);
        }
    }
    for i in 0..2 {
        let mut tp = top.clone();
        tp[i] += h;
        let mut tm = top.clone();
        tm[i] -= h;
        assert!(((loss(&n, &tp) - loss(&n, &tm)) / (2.0 * h) - dtop[i]).abs() < 1e-7);
    }
}

#[test]
fn config_json_round_trip_and_rejection() {
    let text = r#"{"layers":[4,3,2],"activation":"tanh","eta_z":0.1,"eta_w":0.01,"seed":42,"update_order":"states_first"}"#;
    let cfg = PCConfig::from_json(text).unwrap();
    let n = PCNetwork::new(&cfg).unwrap();
    assert_eq!(n.layers()[0].activation, Activation::Tanh);
    assert_eq!(n.update_order, UpdateOrder::StatesFirst);
    let again = PCNetwork::new(&n.config()).unwrap();
    assert_eq!(n, again);
    assert!(PCConfig::from_json(r#"{"layers":[2,2],"eta_z":0.1,"eta_w":0.1,"bogus":1}"#).is_err());
    assert!(matches!(PCNetwork::new(&PCConfig::new(vec![3], Activation::Identity, 0.1, 0.1, 0)), Err(Error::Config(_))));
    let mut c = PCConfig::new(vec![3, 2], Activation::Identity, 0.1, 0.1, 0);
    c.top_prior = Some(vec![1.0]);
    assert!(matches!(PCNetwork::new(&c), Err(Error::Config(_))));
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut cfg = PCConfig::new(vec![5, 4, 3], Activation::Tanh, 0.02, 0.03, 99);
    cfg.use_bias = true;
    let mut n = PCNetwork::new(&cfg).unwrap();
    randomize_states(&mut n, &mut rng);
    n.biases_mut()[1][2] = 0.25;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    n.save_checkpoint_file(&path).unwrap();
    let back = PCNetwork::load_checkpoint_file(&path).unwrap();
    assert_eq!(n, back);
    let bytes = std::fs::read(&path).unwrap();
    let newline = bytes.iter().position(|b| *b == b'\n').unwrap();
    let values = (4 * 5 + 3 * 4) + (5 + 4) + (5 + 4 + 3);
    assert_eq!(bytes.len() - newline - 1, values * 8);
    let first = f64::from_le_bytes(bytes[newline + 1..newline + 9].try_into().unwrap());
    assert_eq!(first, n.weights()[0][(0, 0)]);
    let second = f64::from_le_bytes(bytes[newline + 9..newline + 17].try_into().unwrap());
    assert_eq!(second, n.weights()[0][(0, 1)]);

    let truncated = &bytes[..bytes.len() - 8];
    assert!(matches!(PCNetwork::load_checkpoint(truncated), Err(Error::Format(_))));
}

#[test]
fn seeds_are_deterministic() {
    assert_eq!(net(&[4, 3], Activation::Tanh, 0.1, 0.1, 5), net(&[4, 3], Activation::Tanh, 0.1, 0.1, 5));
    assert_ne!(net(&[4, 3], Activation::Tanh, 0.1, 0.1, 5), net(&[4, 3], Activation::Tanh, 0.1, 0.1, 6));
    let n = net(&[4, 9], Activation::Tanh, 0.1, 0.1, 5);
    assert!(n.weights()[0].iter().all(|w| w.abs() <= 1.0 / 3.0));
}

#[test]
fn flatten_is_row_major() {
    let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    assert_eq!(flatten_row_major(&m).as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
}

struct Recording(Vec<usize>);

impl WeightPreconditioner for Recording {
    fn precondition(&mut self, layer: usize, _net: &PCNetwork, g: &DMatrix<f64>) -> actpc_geom::Result<DMatrix<f64>> {
        self.0.push(layer);
        Ok(g.clone())
    }
}

#[test]
fn preconditioner_sees_every_layer_each_iteration() {
    let mut n = net(&[3, 3, 2], Activation::Identity, 0.1, 0.1, 1);
    let mut r = Recording(Vec::new());
    n.micro_iterate(&DVector::from_element(3, 1.0), 2, Some(&mut r)).unwrap();
    assert_eq!(r.0, vec![0, 1, 0, 1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn weight_gradients_match_fd(seed in 0u64..10_000, d0 in 1usize..8, d1 in 1usize..8, d2 in 1usize..6, tanh in any::<bool>()) {
        let act = if tanh { Activation::Tanh } else { Activation::Identity };
        let mut n = net(&[d0, d1, d2], act, 0.1, 0.1, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        randomize_states(&mut n, &mut rng);
        fd_check(&n);
    }

    #[test]
    fn zero_errors_fix_everything(seed in 0u64..10_000, d in 1usize..6) {
        // zero input with zero states matches every prediction exactly
        let mut n = net(&[d, d], Activation::Identity, 0.2, 0.2, seed);
        let before = n.clone();
        n.micro_iterate(&DVector::zeros(d), 3, None).unwrap();
        prop_assert_eq!(n, before);
    }
}
