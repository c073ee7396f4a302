use nalgebra::DMatrix;

use super::graph::{Distribution, GroundMetricGraph};
use crate::error::{Error, Result};

pub const SINKHORN_DEFAULT_TOL: f64 = 1e-9;
pub const SINKHORN_DEFAULT_MAX_ITER: usize = 10_000;

/// Outcome of an entropic transport solve.
#[derive(Clone, Debug)]
pub struct SinkhornResult {
    /// Square root of `⟨π, C⟩`, where `π` is the final entropic iterate rounded
    /// onto the transport polytope (exact marginals).
    pub distance: f64,
    pub converged: bool,
    pub iterations: usize,
    /// L1 violation of the source marginal at exit, before rounding.
    pub marginal_violation: f64,
    /// Whether the log-domain iteration was used.
    pub log_domain: bool,
    pub plan: DMatrix<f64>,
}

/// Entropic 2-Wasserstein distance on the squared-cost kernel.
///
/// Log-domain updates are used for `epsilon < 1e-2` and whenever the plain
/// Gibbs kernel underflows. Hitting `max_iter` returns the last iterate with
/// `converged = false`.
pub fn w2_sinkhorn(
    p: &Distribution,
    q: &Distribution,
    g: &GroundMetricGraph,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<SinkhornResult> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidDomain(format!("epsilon {epsilon} must be positive")));
    }
    g.check_support(p, "source")?;
    g.check_support(q, "target")?;
    let rows: Vec<usize> = (0..g.n()).filter(|&i| p.weights()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..g.n()).filter(|&j| q.weights()[j] > 0.0).collect();
    let a: Vec<f64> = rows.iter().map(|&i| p.weights()[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| q.weights()[j]).collect();
    let c = DMatrix::from_fn(rows.len(), cols.len(), |i, j| g.cost()[(rows[i], cols[j])].powi(2));

    let kernel = c.map(|x| (-x / epsilon).exp());
    // Any entry below the normal range loses precision; the scaling vectors
    // then over- or underflow long before the plan converges.
    let underflow = kernel.iter().any(|k| *k < f64::MIN_POSITIVE);
    let scaled = if epsilon < 1e-2 || underflow {
        None
    } else {
        scaling_iterate(&a, &b, &kernel, max_iter, tol)
    };
    let (sub, iterations, converged, violation, log_domain) = match scaled {
        Some((pl, it, conv, viol)) => (pl, it, conv, viol, false),
        None => {
            let (pl, it, conv, viol) = log_domain_iterate(&a, &b, &c, epsilon, max_iter, tol);
            (pl, it, conv, viol, true)
        }
    };

    let sub = round_to_polytope(sub, &a, &b);
    let n = g.n();
    let mut plan = DMatrix::zeros(n, n);
    for (ii, &i) in rows.iter().enumerate() {
        for (jj, &j) in cols.iter().enumerate() {
            plan[(i, j)] = sub[(ii, jj)];
        }
    }
    let cost = sub.component_mul(&c).sum();
    Ok(SinkhornResult {
        distance: cost.max(0.0).sqrt(),
        converged,
        iterations,
        marginal_violation: violation,
        log_domain,
        plan,
    })
}

/// Projects an approximate plan onto the set of couplings with marginals
/// `a`, `b`: rows and columns are scaled down where they overshoot, and the
/// remaining deficit is added back as a rank-one correction.
fn round_to_polytope(mut plan: DMatrix<f64>, a: &[f64], b: &[f64]) -> DMatrix<f64> {
    let (m, n) = plan.shape();
    for (i, &ai) in a.iter().enumerate() {
        let s = plan.row(i).sum();
        if s > ai {
            plan.row_mut(i).scale_mut(ai / s);
        }
    }
    for (j, &bj) in b.iter().enumerate() {
        let s = plan.column(j).sum();
        if s > bj {
            plan.column_mut(j).scale_mut(bj / s);
        }
    }
    let err_r: Vec<f64> = (0..m).map(|i| (a[i] - plan.row(i).sum()).max(0.0)).collect();
    let err_c: Vec<f64> = (0..n).map(|j| (b[j] - plan.column(j).sum()).max(0.0)).collect();
    let total: f64 = err_r.iter().sum();
    if total > 0.0 {
        for i in 0..m {
            for j in 0..n {
                plan[(i, j)] += err_r[i] * err_c[j] / total;
            }
        }
    }
    plan
}

fn row_violation(plan: &DMatrix<f64>, a: &[f64]) -> f64 {
    (0..plan.nrows()).map(|i| (plan.row(i).sum() - a[i]).abs()).sum()
}

/// Plain matrix scaling; `None` when a scaling factor stops being finite.
fn scaling_iterate(a: &[f64], b: &[f64], k: &DMatrix<f64>, max_iter: usize, tol: f64) -> Option<(DMatrix<f64>, usize, bool, f64)> {
    let (m, n) = k.shape();
    let mut u = vec![1.0; m];
    let mut v = vec![1.0; n];
    let plan_of = |u: &[f64], v: &[f64]| DMatrix::from_fn(m, n, |i, j| u[i] * k[(i, j)] * v[j]);
    let mut violation = f64::INFINITY;
    for it in 1..=max_iter {
        for i in 0..m {
            let s: f64 = (0..n).map(|j| k[(i, j)] * v[j]).sum();
            u[i] = a[i] / s;
        }
        for j in 0..n {
            let s: f64 = (0..m).map(|i| k[(i, j)] * u[i]).sum();
            v[j] = b[j] / s;
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return None;
        }
        let plan = plan_of(&u, &v);
        violation = row_violation(&plan, a);
        if violation < tol {
            return Some((plan, it, true, violation));
        }
    }
    Some((plan_of(&u, &v), max_iter, false, violation))
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Log-domain iteration with ε-scaling: potentials are warm-started through a
/// geometric sequence of larger regularizations before the final solve at
/// `eps`, which accelerates convergence when `eps` is small.
fn log_domain_iterate(
    a: &[f64],
    b: &[f64],
    c: &DMatrix<f64>,
    eps: f64,
    max_iter: usize,
    tol: f64,
) -> (DMatrix<f64>, usize, bool, f64) {
    let (m, n) = c.shape();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let cmax = c.iter().cloned().fold(0.0_f64, f64::max);
    let mut schedule = Vec::new();
    let mut level = cmax.max(eps);
    while level > eps * 2.0 {
        schedule.push(level);
        level *= 0.5;
    }
    for &e in &schedule {
        log_domain_sweeps(a, b, c, e, 2000, 1e-8, &mut f, &mut g);
    }
    log_domain_sweeps(a, b, c, eps, max_iter, tol, &mut f, &mut g)
}

#[allow(clippy::too_many_arguments)]
fn log_domain_sweeps(
    a: &[f64],
    b: &[f64],
    c: &DMatrix<f64>,
    eps: f64,
    max_iter: usize,
    tol: f64,
    f: &mut [f64],
    g: &mut [f64],
) -> (DMatrix<f64>, usize, bool, f64) {
    let (m, n) = c.shape();
    let plan_of = |f: &[f64], g: &[f64]| DMatrix::from_fn(m, n, |i, j| ((f[i] + g[j] - c[(i, j)]) / eps).exp());
    let mut violation = f64::INFINITY;
    for it in 1..=max_iter {
        for i in 0..m {
            f[i] = eps * a[i].ln() - eps * log_sum_exp((0..n).map(|j| (g[j] - c[(i, j)]) / eps));
        }
        for j in 0..n {
            g[j] = eps * b[j].ln() - eps * log_sum_exp((0..m).map(|i| (f[i] - c[(i, j)]) / eps));
        }
        let plan = plan_of(f, g);
        violation = row_violation(&plan, a);
        if violation < tol {
            return (plan, it, true, violation);
        }
    }
    (plan_of(f, g), max_iter, false, violation)
}
