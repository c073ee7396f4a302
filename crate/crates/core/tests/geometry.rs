mod common;

use actpc_geom::geometry::*;
use actpc_geom::util::{rng, softmax};
use actpc_geom::Error;
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn dist(w: &[f64]) -> Distribution {
    Distribution::new(DVector::from_row_slice(w)).unwrap()
}

fn two_node_graph() -> GroundMetricGraph {
    let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    GroundMetricGraph::new(m.clone(), m).unwrap()
}

#[test]
fn distribution_validation() {
    assert!(Distribution::new(DVector::from_row_slice(&[0.5, 0.6])).is_err());
    assert!(Distribution::new(DVector::from_row_slice(&[-0.1, 1.1])).is_err());
    let d = dist(&[0.25, 0.75]);
    let json = serde_json::to_string(&d).unwrap();
    let back: Distribution = serde_json::from_str(&json).unwrap();
    assert_eq!(d, back);
    assert!(serde_json::from_str::<Distribution>(r#"{"weights":[0.2,0.2]}"#).is_err());
}

#[test]
fn graph_json_roundtrip_and_validation() {
    let mut r = rng(3);
    let g = random_graph(&mut r, 5);
    let json = serde_json::to_string(&g).unwrap();
    let back: GroundMetricGraph = serde_json::from_str(&json).unwrap();
    assert_eq!(g, back);
    let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
    assert!(GroundMetricGraph::new(bad.clone(), bad).is_err());
}

#[test]
fn default_omega_uses_median_cost() {
    let cost = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 2.0, 3.0, 0.0]);
    let g = GroundMetricGraph::from_cost(cost, None).unwrap();
    // median nonzero cost is 2
    assert!((g.omega()[(0, 1)] - (-(0.5f64).powi(2)).exp()).abs() < 1e-15);
    assert!((g.omega()[(1, 2)] - (-(1.5f64).powi(2)).exp()).abs() < 1e-15);
}

#[test]
fn laplacian_two_node_example() {
    let l = build_laplacian(&dist(&[0.5, 0.5]), &two_node_graph()).unwrap();
    assert_eq!(l.matrix, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
}

#[test]
fn laplacian_zero_omega_and_small_n() {
    let z = DMatrix::zeros(3, 3);
    let cost = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 });
    let g = GroundMetricGraph::new(z, cost).unwrap();
    let l = build_laplacian(&Distribution::uniform(3).unwrap(), &g).unwrap();
    assert_eq!(l.matrix, DMatrix::zeros(3, 3));
    let g1 = GroundMetricGraph::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).unwrap();
    assert!(matches!(build_laplacian(&Distribution::uniform(1).unwrap(), &g1), Err(Error::InvalidDomain(_))));
    assert!(matches!(pinv_lowrank(&l, 1), Err(Error::InvalidDomain(_))));
}

#[test]
fn laplacian_random_instance_oracle() {
    let mut r = rng(11);
    for _ in 0..50 {
        let g = random_graph(&mut r, 3);
        let p = random_distribution(&mut r, 3);
        let l = build_laplacian(&p, &g).unwrap();
        for i in 0..3 {
            assert!(l.matrix.row(i).sum().abs() < 1e-12);
        }
        assert!(eigenvalues(&l.matrix)[0] >= -1e-12);
        let ones = DVector::from_element(3, 1.0);
        assert!((&l.matrix * ones).norm() < 1e-12);
    }
}

#[test]
fn laplacian_quadratic_form_nonnegative() {
    let mut r = rng(12);
    for _ in 0..20 {
        let n = r.random_range(2..=10);
        let g = random_sparse_graph(&mut r, n, 0.5);
        let l = build_laplacian(&random_distribution(&mut r, n), &g).unwrap();
        for _ in 0..1000 {
            let x = DVector::from_fn(n, |_, _| r.random::<f64>() * 2.0 - 1.0);
            assert!(x.dot(&(&l.matrix * &x)) >= -1e-9);
        }
    }
}

#[test]
fn pinv_two_node_example() {
    let l = build_laplacian(&dist(&[0.5, 0.5]), &two_node_graph()).unwrap();
    let out = pinv_lowrank(&l, 1).unwrap();
    assert!((out.factors.sigma[0] - 0.5).abs() < 1e-14);
    let u = out.factors.u.column(0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    assert!((u[0] - s).abs() < 1e-12 && (u[1] + s).abs() < 1e-12);
    let expected = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
    assert!((out.factors.to_dense() - expected).norm() < 1e-14);
    assert!(!out.reduced_rank_warning);
}

#[test]
fn pinv_full_rank_matches_dense_oracle() {
    let mut r = rng(13);
    for _ in 0..30 {
        let n = r.random_range(3..=9);
        let g = random_graph(&mut r, n);
        let l = build_laplacian(&random_distribution(&mut r, n), &g).unwrap();
        let low = pinv_lowrank(&l, n - 1).unwrap();
        low.factors.validate().unwrap();
        let oracle = connected_laplacian_pinv(&l.matrix);
        assert!((low.factors.to_dense() - &oracle).norm() < 1e-8);
        assert!((pinv_dense(&l).unwrap() - oracle).norm() < 1e-8);
        let lm = &l.matrix;
        let prop = (lm * low.factors.to_dense() * lm - lm).norm() / lm.norm();
        assert!(prop < 1e-6);
    }
}

#[test]
fn pinv_truncation_keeps_largest_inverse_eigenvalues() {
    let mut r = rng(14);
    let g = random_graph(&mut r, 6);
    let l = build_laplacian(&random_distribution(&mut r, 6), &g).unwrap();
    let full = pinv_lowrank(&l, 5).unwrap();
    let two = pinv_lowrank(&l, 2).unwrap();
    assert_eq!(two.factors.sigma.as_slice(), &full.factors.sigma.as_slice()[..2]);
    assert!(full.factors.sigma.as_slice().windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn pinv_disconnected_graph_warns() {
    // two components: {0,1} and {2,3}
    let mut omega = DMatrix::zeros(4, 4);
    for (i, j) in [(0, 1), (2, 3)] {
        omega[(i, j)] = 1.0;
        omega[(j, i)] = 1.0;
    }
    let cost = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
    let g = GroundMetricGraph::new(omega, cost).unwrap();
    let l = build_laplacian(&Distribution::uniform(4).unwrap(), &g).unwrap();
    let out = pinv_lowrank(&l, 3).unwrap();
    assert!(out.reduced_rank_warning);
    assert_eq!(out.effective_rank(), 2);
}

#[test]
fn w2_identical_and_point_masses() {
    let mut r = rng(15);
    let g = random_graph(&mut r, 5);
    let p = random_distribution(&mut r, 5);
    let (d, plan) = w2_exact(&p, &p, &g).unwrap();
    assert!(d.abs() < 1e-12);
    assert!((plan.pi - DMatrix::from_diagonal(p.weights())).norm() < 1e-12);
    for i in 0..5 {
        for j in 0..5 {
            let (d, _) = w2_exact(&Distribution::point_mass(5, i).unwrap(), &Distribution::point_mass(5, j).unwrap(), &g).unwrap();
            assert!((d - g.cost()[(i, j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn w2_matches_vertex_enumeration() {
    let mut r = rng(16);
    for _ in 0..50 {
        let g = random_graph(&mut r, 4);
        let p = random_distribution(&mut r, 4);
        let q = random_distribution(&mut r, 4);
        let (d, plan) = w2_exact(&p, &q, &g).unwrap();
        let c = g.cost().map(|x| x * x);
        let oracle = vertex_enumeration_cost(p.weights().as_slice(), q.weights().as_slice(), &c);
        assert!((d - oracle.sqrt()).abs() < 1e-9, "{d} vs {}", oracle.sqrt());
        for i in 0..4 {
            assert!((plan.pi.row(i).sum() - p.weights()[i]).abs() < 1e-8);
            assert!((plan.pi.column(i).sum() - q.weights()[i]).abs() < 1e-8);
        }
        assert!(plan.pi.iter().all(|x| *x >= 0.0));
    }
}

#[test]
fn w2_dual_potentials_certify_optimality() {
    let mut r = rng(17);
    for _ in 0..30 {
        let n = r.random_range(3..=20);
        let g = random_graph(&mut r, n);
        let p = random_distribution(&mut r, n);
        let q = random_distribution(&mut r, n);
        let sol = w2_exact_with_potentials(&p, &q, &g).unwrap();
        let c = g.cost().map(|x| x * x);
        let dual = sol.row_potentials.dot(p.weights()) + sol.col_potentials.dot(q.weights());
        assert!((dual - sol.plan.cost_value).abs() < 1e-10);
        for i in 0..n {
            for j in 0..n {
                assert!(sol.row_potentials[i] + sol.col_potentials[j] <= c[(i, j)] + 1e-10);
            }
        }
    }
}

#[test]
fn w2_metric_properties() {
    let mut r = rng(18);
    for _ in 0..30 {
        let n = r.random_range(3..=8);
        let g = random_graph(&mut r, n);
        let (p, q, s) = (random_distribution(&mut r, n), random_distribution(&mut r, n), random_distribution(&mut r, n));
        let pq = w2_exact(&p, &q, &g).unwrap().0;
        let qp = w2_exact(&q, &p, &g).unwrap().0;
        let qs = w2_exact(&q, &s, &g).unwrap().0;
        let ps = w2_exact(&p, &s, &g).unwrap().0;
        assert!((pq - qp).abs() < 1e-9);
        assert!(ps <= pq + qs + 1e-8);
        assert!(pq > 0.0);
    }
}

#[test]
fn w2_refuses_large_support() {
    let n = EXACT_MAX_SUPPORT + 1;
    let g = GroundMetricGraph::path(n).unwrap();
    let p = Distribution::uniform(n).unwrap();
    assert!(matches!(w2_exact(&p, &p, &g), Err(Error::TooLarge(_))));
}

#[test]
fn sinkhorn_self_distance_shrinks_with_epsilon() {
    let mut r = rng(19);
    let g = random_graph(&mut r, 4);
    let p = random_distribution(&mut r, 4);
    let mut last = f64::INFINITY;
    for eps in [1e-1, 1e-2, 1e-3] {
        let out = w2_sinkhorn(&p, &p, &g, eps, SINKHORN_DEFAULT_MAX_ITER, SINKHORN_DEFAULT_TOL).unwrap();
        assert!(out.distance <= last + 1e-12);
        last = out.distance;
    }
    assert!(last < 0.05);
}

#[test]
fn sinkhorn_close_to_exact_and_monotone() {
    let mut r = rng(20);
    for _ in 0..20 {
        let g = random_graph(&mut r, 4);
        let p = random_distribution(&mut r, 4);
        let q = random_distribution(&mut r, 4);
        let exact = w2_exact(&p, &q, &g).unwrap().0;
        let errs: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&e| (w2_sinkhorn(&p, &q, &g, e, SINKHORN_DEFAULT_MAX_ITER, SINKHORN_DEFAULT_TOL).unwrap().distance - exact).abs())
            .collect();
        assert!(errs[2] / exact < 1e-2, "relative error {}", errs[2] / exact);
        assert!(errs[0] + 1e-12 >= errs[1] && errs[1] + 1e-12 >= errs[2], "{errs:?}");
    }
}

#[test]
fn sinkhorn_flags_non_convergence() {
    let mut r = rng(21);
    let g = random_graph(&mut r, 6);
    let p = random_distribution(&mut r, 6);
    let q = random_distribution(&mut r, 6);
    let out = w2_sinkhorn(&p, &q, &g, 1e-3, 2, 1e-15).unwrap();
    assert!(!out.converged);
    assert_eq!(out.iterations, 2);
    assert!(w2_sinkhorn(&p, &q, &g, 0.0, 10, 1e-9).is_err());
}

#[test]
fn metric_tensor_examples() {
    let mut r = rng(22);
    let a = DMatrix::from_fn(3, 3, |_, _| r.random::<f64>());
    let dense = &a * a.transpose();
    let g = metric_tensor(PinvOperator::Dense(&dense), &DMatrix::identity(3, 3), 1e-3).unwrap();
    assert!((g.matrix - (&dense + DMatrix::identity(3, 3) * 1e-3)).norm() < 1e-14);
    let g0 = metric_tensor(PinvOperator::Dense(&dense), &DMatrix::zeros(3, 2), 0.5).unwrap();
    assert_eq!(g0.matrix, DMatrix::identity(2, 2) * 0.5);
}

#[test]
fn metric_tensor_random_is_symmetric_pd() {
    let mut r = rng(23);
    for _ in 0..50 {
        let g = random_graph(&mut r, 4);
        let l = build_laplacian(&random_distribution(&mut r, 4), &g).unwrap();
        let f = pinv_lowrank(&l, 3).unwrap().factors;
        let j = DMatrix::from_fn(4, 3, |_, _| r.random::<f64>() - 0.5);
        let mt = metric_tensor(PinvOperator::Factors(&f), &j, DEFAULT_DAMPING).unwrap();
        assert!((&mt.matrix - mt.matrix.transpose()).norm() < 1e-12);
        assert!(eigenvalues(&mt.matrix)[0] > 0.0);
        let dense = f.to_dense();
        let md = metric_tensor(PinvOperator::Dense(&dense), &j, DEFAULT_DAMPING).unwrap();
        assert!((md.matrix - &mt.matrix).norm() < 1e-12);
    }
}

#[test]
fn metric_tensor_escalates_damping() {
    // indefinite operator: escalation must be recorded
    let neg = DMatrix::from_diagonal(&DVector::from_row_slice(&[-1e-7, 1.0]));
    let mt = metric_tensor(PinvOperator::Dense(&neg), &DMatrix::identity(2, 2), 1e-8).unwrap();
    assert_eq!(mt.escalations, 2);
    assert!((mt.damping - 1e-6).abs() < 1e-20);
    assert!(mt.positive_definite());
    let zero = DMatrix::zeros(2, 2);
    let mt = metric_tensor(PinvOperator::Dense(&zero), &DMatrix::identity(2, 2), 0.0).unwrap();
    assert_eq!(mt.damping, DEFAULT_DAMPING);
}

#[test]
fn natural_step_examples() {
    let theta = DVector::from_row_slice(&[0.3, -1.2, 4.0]);
    let grad = DVector::from_row_slice(&[0.7, 0.1, -2.5]);
    let out = natural_gradient_step(&theta, &grad, &MetricTensor::identity(3), 0.37).unwrap();
    assert_eq!(out, &theta - &grad * 0.37);
    let g = MetricTensor {
        matrix: DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 0.5])),
        damping: 0.0,
        escalations: 0,
        min_eigenvalue: 0.5,
    };
    let out = natural_gradient_step(&DVector::zeros(2), &DVector::from_row_slice(&[1.0, 1.0]), &g, 1.0).unwrap();
    assert!((out - DVector::from_row_slice(&[-0.5, -2.0])).amax() < 1e-15);
}

#[test]
fn natural_step_reports_failure() {
    let g = MetricTensor { matrix: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), damping: 0.0, escalations: 0, min_eigenvalue: -1.0 };
    match natural_gradient_step(&DVector::zeros(2), &DVector::from_element(2, 1.0), &g, 1.0) {
        Err(Error::Solve { condition }) => assert!((condition - 1.0).abs() < 1e-12),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn jacobian_examples() {
    let constant = |_: &DVector<f64>| Distribution::uniform(3);
    let j = jacobian_fd(constant, &DVector::from_element(2, 0.3), 1e-5).unwrap();
    assert_eq!(j, DMatrix::zeros(3, 2));
    let sm = |t: &DVector<f64>| Distribution::new(softmax(t));
    let j = jacobian_fd(sm, &DVector::zeros(2), 1e-5).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
    assert!((j - expected).norm() < 1e-9);
    assert!(jacobian_fd(sm, &DVector::zeros(2), 0.0).is_err());
}

#[test]
fn natural_gradient_loop_decreases_distance() {
    let g = GroundMetricGraph::path(6).unwrap();
    let target = Distribution::new(softmax(&DVector::from_row_slice(&[3.0, 1.0, 0.0, 0.0, 1.0, 2.0]))).unwrap();
    let model = |t: &DVector<f64>| Distribution::new(softmax(t));
    let cfg = NaturalGradientConfig { eta: 0.02, ..Default::default() };
    let (_, trace) = natural_gradient_descent(model, &DVector::zeros(6), &target, &g, &ExactPinv, None, &cfg, 40).unwrap();
    assert!(trace.last().unwrap().w2 < 0.25 * trace[0].w2, "{:?}", trace.last());
}

#[test]
fn plan_and_distance_csv_export() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(24);
    let g = random_graph(&mut r, 3);
    let (d, plan) = w2_exact(&random_distribution(&mut r, 3), &random_distribution(&mut r, 3), &g).unwrap();
    plan.write_csv(&dir.path().join("plan.csv")).unwrap();
    write_distance_csv(&dir.path().join("d.csv"), &[("p".into(), "q".into(), d)]).unwrap();
    let text = std::fs::read_to_string(dir.path().join("plan.csv")).unwrap();
    assert!(text.starts_with("source,target,mass"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_laplacian_rows_and_psd(seed in any::<u64>(), n in 2usize..=16) {
        let mut r = rng(seed);
        let g = random_sparse_graph(&mut r, n, 0.6);
        let l = build_laplacian(&random_distribution(&mut r, n), &g).unwrap();
        for i in 0..n {
            prop_assert!(l.matrix.row(i).sum().abs() < 1e-10);
        }
        prop_assert!((&l.matrix - l.matrix.transpose()).norm() == 0.0);
        prop_assert!(eigenvalues(&l.matrix)[0] >= -1e-9);
    }

    #[test]
    fn prop_w2_zero_iff_equal(seed in any::<u64>(), n in 2usize..=10) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, n);
        let p = random_distribution(&mut r, n);
        let q = random_distribution(&mut r, n);
        let d = w2_exact(&p, &q, &g).unwrap().0;
        let linf = (p.weights() - q.weights()).amax();
        prop_assert_eq!(d < 1e-9, linf < 1e-9);
        prop_assert!(w2_exact(&p, &p, &g).unwrap().0 < 1e-9);
    }

    #[test]
    fn prop_jacobian_columns_conserve_mass(seed in any::<u64>(), n in 2usize..=8, m in 1usize..=5) {
        let mut r = rng(seed);
        let a = DMatrix::from_fn(n, m, |_, _| r.random::<f64>() * 2.0 - 1.0);
        let theta = DVector::from_fn(m, |_, _| r.random::<f64>());
        let model = |t: &DVector<f64>| Distribution::new(softmax(&(&a * t)));
        let j = jacobian_fd(model, &theta, 1e-5).unwrap();
        for c in 0..m {
            prop_assert!(j.column(c).sum().abs() < 1e-6);
        }
    }

    #[test]
    fn prop_spd_solve_residual(seed in any::<u64>(), m in 1usize..=12) {
        let mut r = rng(seed);
        let a = DMatrix::from_fn(m, m, |_, _| r.random::<f64>() - 0.5);
        let g = MetricTensor { matrix: &a * a.transpose() + DMatrix::identity(m, m) * 0.1, damping: 0.0, escalations: 0, min_eigenvalue: 0.1 };
        let grad = DVector::from_fn(m, |_, _| r.random::<f64>());
        let theta = DVector::from_fn(m, |_, _| r.random::<f64>());
        let eta = 0.3;
        let next = natural_gradient_step(&theta, &grad, &g, eta).unwrap();
        let resid = &g.matrix * (&next - &theta) + &grad * eta;
        prop_assert!(resid.norm() < 1e-10);
    }
}

#[test]
fn sinkhorn_switches_domain_when_kernel_underflows() {
    let g = GroundMetricGraph::path(5).unwrap();
    let p = Distribution::from_unnormalized(DVector::from_vec(vec![4.0, 3.0, 2.0, 1.0, 0.0])).unwrap();
    let q = Distribution::from_unnormalized(DVector::from_vec(vec![0.0, 1.0, 1.0, 2.0, 4.0])).unwrap();
    let exact = w2_exact(&p, &q, &g).unwrap().0;
    // exp(−16 / 0.01) is far below the smallest normal double.
    let s = w2_sinkhorn(&p, &q, &g, 0.01, 10_000, 1e-10).unwrap();
    assert!(s.converged && s.log_domain);
    assert!((s.distance - exact).abs() < 1e-2 * exact);
}
