//! Experiment driver behind the `actpc` binary: configuration, reports,
//! the preconditioner benchmark, the property probes, the retrieval demo
//! and scenario runs of the fixpoint search.
//!
//! Every report is a deterministic function of its configuration, seed
//! list and crate version. Seeds run in parallel and are folded back in
//! sorted order.

mod bench;
mod config;
mod demo;
mod galois_run;
mod probes;
mod report;
mod stats;

pub use bench::{bench_target, run_bench_compare, run_seed, run_variant, BenchRun, PinvMode, VariantSummary, WassersteinPreconditioner, VARIANTS};
pub use config::{BenchConfig, ConvexityConfig, ExperimentConfig, LipschitzConfig, ScaleConfig, SeedRange, TaskFamily, DEFAULT_SEEDS};
pub use demo::{demo_chinaglia, format_ranking, ExpectedHit, FactSpec, HypervectorScenario};
pub use galois_run::run_galois;
pub use probes::{
    analytic_lipschitz, convexity_probe, lipschitz_probe, one_vs_rest, run_probe_convexity, run_probe_lipschitz, run_probe_scale, scale_probe,
    ConvexityOutcome, DescentRun, LipschitzOutcome, LocationProblem, ScaleOutcome,
};
pub use report::{MetricRow, Provenance, Report, VERSION};
pub use stats::{censored_summary, correlation, histogram, CensoredSummary};
