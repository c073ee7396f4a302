use actpc_geom::fuzzy_fca::{cotrain, evaluate_lattice, fcl_forward, threshold_task, FuzzyConfig, FuzzyLattice, UtilityNet};
use nalgebra::DVector;

fn main() -> actpc_geom::Result<()> {
    let data = threshold_task(0, 200);
    let holdout = threshold_task(1000, 200);

    let mut lattice = FuzzyLattice::new(&FuzzyConfig { discovered: 7, ..FuzzyConfig::new(4, 1, 0) })?;
    // A hand-written concept: "the first coordinate is large".
    lattice.clamp_linear(0, "x0_high", &[8.0, 0.0, 0.0, 0.0], -4.0)?;
    let mut utility = UtilityNet::new(lattice.n(), 1, &[], 100)?;

    let trace = cotrain(&mut lattice, &mut utility, &data, 500, 0.0015)?;
    println!("loss {:.3} -> {:.3}", trace[0], trace.last().copied().unwrap_or(f64::NAN));
    let score = evaluate_lattice(&lattice, &utility, &holdout)?;
    println!("holdout MSE {:.4} vs mean baseline {:.4}", score.score, score.baseline);

    let x = DVector::from_vec(vec![1.5, -1.0, 0.0, 0.0]);
    let memberships = fcl_forward(&lattice, &x)?;
    for (name, m) in lattice.names().iter().zip(memberships.iter()) {
        println!("  {name:<12} {m:.3}");
    }
    Ok(())
}
