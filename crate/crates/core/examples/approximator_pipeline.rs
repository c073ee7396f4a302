//! Trains the embedding approximator on one synthetic family, then
//! compares held-out error with the mean baseline and checks how well the
//! reconstructed operators preserve natural-gradient directions.

use actpc_geom::approximator::{mean_baseline_mse, train_approximator, ApproximatorConfig, SyntheticFamily};
use actpc_geom::util::median;

fn main() -> actpc_geom::Result<()> {
    let setup = SyntheticFamily::v1().build(0)?;
    let train = setup.train_pairs();
    let test = setup.test_pairs();
    let (net, trace) = train_approximator(&train, &ApproximatorConfig::default())?;
    println!("training loss {:.4e} -> {:.4e}", trace[0], trace.last().copied().unwrap_or(f64::NAN));

    let mse = net.loss(&test)?;
    let baseline = mean_baseline_mse(&train, &test);
    println!("held-out MSE {mse:.4e}, mean baseline {baseline:.4e} (ratio {:.3})", mse / baseline);

    let angles = setup.direction_angles(&net, 50, 1)?;
    let within = angles.iter().filter(|a| **a <= 30.0).count();
    println!("direction angles: median {:.2}°, {within}/50 within 30°", median(&angles).unwrap_or(f64::NAN));
    Ok(())
}
