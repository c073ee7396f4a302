use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use super::graph::Distribution;
use crate::error::{Error, Result};
use crate::factor::FactorTriple;

pub const DEFAULT_DAMPING: f64 = 1e-8;
const MAX_ESCALATIONS: usize = 3;

/// The pseudoinverse operator fed into the metric tensor.
#[derive(Clone, Copy, Debug)]
pub enum PinvOperator<'a> {
    Dense(&'a DMatrix<f64>),
    Factors(&'a FactorTriple),
}

impl PinvOperator<'_> {
    fn dim(&self) -> usize {
        match self {
            PinvOperator::Dense(m) => m.nrows(),
            PinvOperator::Factors(f) => f.dim(),
        }
    }
}

/// `G = Jᵀ L† J + λI`.
#[derive(Clone, Debug)]
pub struct MetricTensor {
    pub matrix: DMatrix<f64>,
    /// Damping actually applied after any escalation.
    pub damping: f64,
    pub escalations: usize,
    pub min_eigenvalue: f64,
}

impl MetricTensor {
    pub fn positive_definite(&self) -> bool {
        self.min_eigenvalue > 0.0
    }

    /// Identity metric of size `m` (no damping).
    pub fn identity(m: usize) -> Self {
        Self { matrix: DMatrix::identity(m, m), damping: 0.0, escalations: 0, min_eigenvalue: 1.0 }
    }
}

/// Builds `Jᵀ L† J + λI`, escalating `λ` by ×10 (at most three times) while
/// the smallest eigenvalue is not positive.
pub fn metric_tensor(l_dagger: PinvOperator<'_>, j: &DMatrix<f64>, lambda_damp: f64) -> Result<MetricTensor> {
    if !(lambda_damp >= 0.0) {
        return Err(Error::InvalidDomain(format!("damping {lambda_damp} must be non-negative")));
    }
    if l_dagger.dim() != j.nrows() {
        return Err(Error::Dimension(format!("L† is {0}x{0} but J has {1} rows", l_dagger.dim(), j.nrows())));
    }
    let core = match l_dagger {
        PinvOperator::Dense(m) => j.transpose() * m * j,
        PinvOperator::Factors(f) => {
            let mut a = f.u.transpose() * j;
            for (r, s) in f.sigma.iter().enumerate() {
                a.row_mut(r).scale_mut(*s);
            }
            j.transpose() * f.v.clone() * a
        }
    };
    let core = (&core + core.transpose()) * 0.5;
    let m = core.nrows();
    let mut lambda = lambda_damp;
    let mut escalations = 0;
    loop {
        let g = &core + DMatrix::identity(m, m) * lambda;
        let min_eig = if m == 0 { 1.0 } else { SymmetricEigen::new(g.clone()).eigenvalues.min() };
        if min_eig > 0.0 || escalations == MAX_ESCALATIONS {
            return Ok(MetricTensor { matrix: g, damping: lambda, escalations, min_eigenvalue: min_eig });
        }
        lambda = if lambda > 0.0 { lambda * 10.0 } else { DEFAULT_DAMPING };
        escalations += 1;
    }
}

fn condition_estimate(g: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(g.clone()).eigenvalues;
    let max = eig.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, x| a.min(x.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `G Δ = grad` by Cholesky factorization.
pub fn natural_direction(grad: &DVector<f64>, g: &MetricTensor) -> Result<DVector<f64>> {
    if g.matrix.nrows() != grad.len() {
        return Err(Error::Dimension(format!("metric is {0}x{0}, gradient has {1} entries", g.matrix.nrows(), grad.len())));
    }
    let chol = Cholesky::new(g.matrix.clone()).ok_or_else(|| Error::Solve { condition: condition_estimate(&g.matrix) })?;
    let delta = chol.solve(grad);
    if delta.iter().any(|x| !x.is_finite()) {
        return Err(Error::Solve { condition: condition_estimate(&g.matrix) });
    }
    Ok(delta)
}

/// `θ − η G⁻¹ grad`, computed with a Cholesky solve.
pub fn natural_gradient_step(theta: &DVector<f64>, grad: &DVector<f64>, g: &MetricTensor, eta: f64) -> Result<DVector<f64>> {
    if theta.len() != grad.len() {
        return Err(Error::Dimension(format!("θ has {} entries, gradient {}", theta.len(), grad.len())));
    }
    let delta = natural_direction(grad, g)?;
    Ok(theta - delta * eta)
}

/// Central-difference Jacobian of a parameter → distribution map.
pub fn jacobian_fd<F>(model: F, theta: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<Distribution>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidDomain(format!("finite-difference step {h} must be positive")));
    }
    let base = model(theta)?;
    let n = base.len();
    let m = theta.len();
    let mut jac = DMatrix::zeros(n, m);
    for k in 0..m {
        let mut plus = theta.clone();
        plus[k] += h;
        let mut minus = theta.clone();
        minus[k] -= h;
        let pp = model(&plus)?;
        let pm = model(&minus)?;
        if pp.len() != n || pm.len() != n {
            return Err(Error::Dimension("model changed support size".into()));
        }
        jac.set_column(k, &((pp.weights() - pm.weights()) / (2.0 * h)));
    }
    Ok(jac)
}

/// Jacobian of `softmax(a)` with respect to `a`: `diag(s) − s sᵀ`.
pub fn softmax_jacobian(s: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(s) - s * s.transpose()
}
