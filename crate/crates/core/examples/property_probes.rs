use actpc_geom::harness::{convexity_probe, lipschitz_probe, ConvexityConfig, LipschitzConfig};

fn main() -> actpc_geom::Result<()> {
    let lip = lipschitz_probe(&LipschitzConfig { pairs: 2000, ..Default::default() }, 0)?;
    println!(
        "lipschitz: analytic L {:.4}, largest observed ratio {:.4}, violations {:.3}",
        lip.analytic_l, lip.max_ratio, lip.violation_fraction
    );

    let cfg = ConvexityConfig { starts: 20, ..Default::default() };
    for amp in [0.0, 0.05] {
        let out = convexity_probe(&cfg, 0, amp)?;
        println!(
            "convexity (bump amplitude {amp}): reached optimum {:.2}, monotone {:.2}",
            out.reached_fraction, out.monotone_fraction
        );
    }
    Ok(())
}
