use actpc_geom::geometry::{w2_exact, w2_sinkhorn, Distribution, GroundMetricGraph, SINKHORN_DEFAULT_MAX_ITER};
use nalgebra::DVector;

fn main() -> actpc_geom::Result<()> {
    let g = GroundMetricGraph::path(5)?;
    let p = Distribution::from_unnormalized(DVector::from_vec(vec![4.0, 3.0, 2.0, 1.0, 0.0]))?;
    let q = Distribution::from_unnormalized(DVector::from_vec(vec![0.0, 1.0, 1.0, 2.0, 4.0]))?;

    let (exact, plan) = w2_exact(&p, &q, &g)?;
    println!("exact W2 = {exact:.6}");
    println!("plan:\n{:.3}", plan.pi);

    for eps in [1e-1, 1e-2, 1e-3] {
        let s = w2_sinkhorn(&p, &q, &g, eps, SINKHORN_DEFAULT_MAX_ITER, 1e-10)?;
        println!(
            "sinkhorn eps={eps:<6} W2 = {:.6} (relative gap {:.2e}, {} iterations, log domain {})",
            s.distance,
            (s.distance - exact).abs() / exact,
            s.iterations,
            s.log_domain
        );
    }
    Ok(())
}
