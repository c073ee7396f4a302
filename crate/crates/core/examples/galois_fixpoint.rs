//! Runs the expand/shrink fixpoint search on a Gaussian-chain scenario and
//! compares the result with the exhaustive oracle.

use actpc_geom::galois::chain_family;

fn main() -> actpc_geom::Result<()> {
    let scenario = chain_family(5);
    let run = scenario.run(5)?;
    for row in &run.result.trace {
        println!("iteration {:>2}: frontier {:>2}, best distance {:.6}", row.iteration, row.frontier_size, row.best_distance);
    }
    let best = &run.result.best;
    println!("best state: {} {:.4?} (converged: {})", best.discrete(), best.continuous().as_slice(), run.result.converged);
    if let (Some(oracle), Some(gap)) = (&run.oracle_best, run.gap) {
        println!("oracle best on its grid: {} with distance {:.6}", oracle.discrete(), oracle.score().unwrap_or(f64::NAN));
        // Negative gaps mean the search found a point off the oracle grid.
        println!("search minus oracle: {gap:.3e}");
    }
    Ok(())
}
