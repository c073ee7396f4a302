//! Fits a softmax family `p(θ) = softmax(θ)` on a path graph to a target
//! distribution, once with plain gradient descent and once with the
//! Wasserstein natural gradient, and prints both W2 curves.

use actpc_geom::geometry::{
    jacobian_fd, natural_gradient_descent, w2_squared_gradient, Distribution, ExactPinv, GroundMetricGraph, NaturalGradientConfig,
};
use actpc_geom::util::softmax;
use nalgebra::DVector;

fn main() -> actpc_geom::Result<()> {
    let n = 6;
    let g = GroundMetricGraph::path(n)?;
    let target = Distribution::from_unnormalized(DVector::from_fn(n, |i, _| if i >= 4 { 1.0 } else { 0.05 }))?;
    let model = |t: &DVector<f64>| Distribution::new(softmax(t));
    let theta0 = DVector::from_fn(n, |i, _| -(i as f64));

    // Near-empty nodes make the metric nearly singular, so a little damping
    // and a short step keep the first updates from saturating the softmax.
    let cfg = NaturalGradientConfig { eta: 0.05, damping: 1e-4, ..Default::default() };
    let (_, natural) = natural_gradient_descent(model, &theta0, &target, &g, &ExactPinv, None, &cfg, 40)?;

    let mut theta = theta0.clone();
    let mut euclidean = Vec::new();
    for _ in 0..40 {
        let jac = jacobian_fd(model, &theta, 1e-6)?;
        let (w2, grad) = w2_squared_gradient(&model(&theta)?, &target, &g, &jac)?;
        euclidean.push(w2);
        theta -= grad * 0.5;
    }

    println!("{:>4} {:>12} {:>12}", "iter", "euclidean", "natural");
    for (i, (e, n)) in euclidean.iter().zip(&natural).enumerate().step_by(5) {
        println!("{i:>4} {e:>12.6} {:>12.6}", n.w2);
    }
    Ok(())
}
