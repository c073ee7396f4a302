//! The outer natural-gradient loop: parameters induce a distribution, the
//! distribution's Laplacian pseudoinverse shapes the metric, and the update
//! follows `G⁻¹ ∇F` for `F = W2²(p(θ), q) − α R(θ)`.

use nalgebra::{DMatrix, DVector};

use super::graph::{Distribution, GroundMetricGraph};
use super::laplacian::{build_laplacian, pinv_dense, pinv_lowrank};
use super::metric::{jacobian_fd, metric_tensor, natural_gradient_step, PinvOperator, DEFAULT_DAMPING};
use super::transport::w2_exact_with_potentials;
use crate::error::Result;

/// Supplies (an approximation of) `L(p)†` for a distribution.
pub trait PinvSource {
    fn pinv(&self, p: &Distribution, g: &GroundMetricGraph) -> Result<DMatrix<f64>>;
}

/// Exact dense pseudoinverse.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactPinv;

impl PinvSource for ExactPinv {
    fn pinv(&self, p: &Distribution, g: &GroundMetricGraph) -> Result<DMatrix<f64>> {
        pinv_dense(&build_laplacian(p, g)?)
    }
}

/// Rank-truncated pseudoinverse.
#[derive(Clone, Copy, Debug)]
pub struct TruncatedPinv {
    pub rank: usize,
}

impl PinvSource for TruncatedPinv {
    fn pinv(&self, p: &Distribution, g: &GroundMetricGraph) -> Result<DMatrix<f64>> {
        Ok(pinv_lowrank(&build_laplacian(p, g)?, self.rank)?.factors.to_dense())
    }
}

/// `W2(p, q)` and the gradient of `W2²` with respect to `θ`, using the
/// transport dual potentials as `∂W2²/∂p` and the chain rule through `jac`.
pub fn w2_squared_gradient(
    p: &Distribution,
    q: &Distribution,
    g: &GroundMetricGraph,
    jac: &DMatrix<f64>,
) -> Result<(f64, DVector<f64>)> {
    let sol = w2_exact_with_potentials(p, q, g)?;
    let u = &sol.row_potentials;
    let centered = u.add_scalar(-u.mean());
    let w2 = sol.plan.cost_value.max(0.0).sqrt();
    Ok((w2, jac.transpose() * centered))
}

/// Optional differentiable reward `R(θ)` returning value and gradient.
pub type RewardFn<'a> = &'a dyn Fn(&DVector<f64>) -> (f64, DVector<f64>);

#[derive(Clone, Debug)]
pub struct NaturalGradientConfig {
    pub eta: f64,
    pub damping: f64,
    pub fd_step: f64,
    /// Weight `α` of the reward term in `F = W2² − α R`.
    pub reward_weight: f64,
}

impl Default for NaturalGradientConfig {
    fn default() -> Self {
        Self { eta: 0.1, damping: DEFAULT_DAMPING, fd_step: 1e-6, reward_weight: 0.0 }
    }
}

/// One row of the loop trace.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopRecord {
    pub iteration: usize,
    pub w2: f64,
    pub objective: f64,
    pub damping: f64,
}

/// Runs `steps` Wasserstein natural-gradient updates from `theta0`.
#[allow(clippy::too_many_arguments)]
pub fn natural_gradient_descent<M>(
    model: M,
    theta0: &DVector<f64>,
    target: &Distribution,
    g: &GroundMetricGraph,
    source: &dyn PinvSource,
    reward: Option<RewardFn<'_>>,
    cfg: &NaturalGradientConfig,
    steps: usize,
) -> Result<(DVector<f64>, Vec<LoopRecord>)>
where
    M: Fn(&DVector<f64>) -> Result<Distribution>,
{
    let mut theta = theta0.clone();
    let mut trace = Vec::with_capacity(steps);
    for iteration in 0..steps {
        let p = model(&theta)?;
        let jac = jacobian_fd(&model, &theta, cfg.fd_step)?;
        let (w2, mut grad) = w2_squared_gradient(&p, target, g, &jac)?;
        let mut objective = w2 * w2;
        if let Some(r) = reward {
            let (value, rgrad) = r(&theta);
            objective -= cfg.reward_weight * value;
            grad -= rgrad * cfg.reward_weight;
        }
        let l_dagger = source.pinv(&p, g)?;
        let metric = metric_tensor(PinvOperator::Dense(&l_dagger), &jac, cfg.damping)?;
        trace.push(LoopRecord { iteration, w2, objective, damping: metric.damping });
        theta = natural_gradient_step(&theta, &grad, &metric, cfg.eta)?;
    }
    Ok((theta, trace))
}
