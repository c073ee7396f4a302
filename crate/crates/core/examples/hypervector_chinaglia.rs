//! Two-hop retrieval: "which country is home to the sport Chinaglia
//! played?" answered from three bound facts.

use actpc_geom::harness::{format_ranking, HypervectorScenario};

fn main() -> actpc_geom::Result<()> {
    let scenario = HypervectorScenario::builtin()?;
    let hits = scenario.run(0)?;
    for line in format_ranking(&hits) {
        println!("{line}");
    }
    let wins = (0..20).filter(|&s| scenario.run(s).map(|h| scenario.is_success(&h)).unwrap_or(false)).count();
    println!("expected chain ranked first on {wins}/20 seeds");
    Ok(())
}
