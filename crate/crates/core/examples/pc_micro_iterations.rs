//! Settles a three-layer predictive-coding network on a fixed input and
//! prints the energy after each micro-iteration.

use actpc_geom::pc_net::{Activation, PCConfig, PCNetwork};
use nalgebra::DVector;

fn main() -> actpc_geom::Result<()> {
    let cfg = PCConfig::new(vec![4, 6, 3], Activation::Tanh, 0.1, 0.01, 7);
    let mut net = PCNetwork::new(&cfg)?;
    let input = DVector::from_vec(vec![0.5, -0.2, 0.1, 0.8]);

    for round in 0..5 {
        let trace = net.micro_iterate(&input, 20, None)?;
        println!(
            "round {round}: energy {:.6} -> {:.6}",
            trace.losses[0],
            trace.losses.last().copied().unwrap_or(f64::NAN)
        );
    }
    println!("top state: {:.4?}", net.states()[2].as_slice());
    Ok(())
}
