use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use actpc_geom::error::Result;
use actpc_geom::galois::{write_trace_csv, Scenario};
use actpc_geom::harness::{
    demo_chinaglia, format_ranking, run_bench_compare, run_galois, run_probe_convexity, run_probe_lipschitz, run_probe_scale, ExperimentConfig,
    HypervectorScenario, Report, SeedRange,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "actpc", version, about = "Transport-geometry experiments for predictive-coding networks")]
struct Cli {
    /// JSON experiment configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Half-open seed range such as `0..20`.
    #[arg(long, global = true)]
    seed_range: Option<SeedRange>,
    /// Output directory for report.json and metrics.csv.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare Euclidean and Wasserstein-preconditioned training.
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
    /// Empirical checks of transport properties.
    Probe {
        #[command(subcommand)]
        which: ProbeCommand,
    },
    /// Hypervector multi-hop retrieval demo.
    Demo {
        #[command(subcommand)]
        which: DemoCommand,
    },
    /// Fixpoint search scenarios.
    Galois {
        #[command(subcommand)]
        which: GaloisCommand,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    Compare,
}

#[derive(Subcommand)]
enum ProbeCommand {
    Lipschitz,
    Convexity,
    Scale,
}

#[derive(Subcommand)]
enum DemoCommand {
    /// Runs the built-in scenario unless a scenario file is given.
    Chinaglia { scenario: Option<PathBuf> },
}

#[derive(Subcommand)]
enum GaloisCommand {
    Run { scenario: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(range) = cli.seed_range {
        config.seeds = Some(range);
    }
    let seeds = config.seeds();
    let out = cli.out.clone().or_else(|| config.out.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    let started = Instant::now();

    let report = match cli.command {
        Command::Bench { which: BenchCommand::Compare } => run_bench_compare(&config, &seeds)?,
        Command::Probe { which } => match which {
            ProbeCommand::Lipschitz => run_probe_lipschitz(&config, &seeds)?,
            ProbeCommand::Convexity => run_probe_convexity(&config, &seeds)?,
            ProbeCommand::Scale => run_probe_scale(&config, &seeds)?,
        },
        Command::Demo { which: DemoCommand::Chinaglia { scenario } } => {
            let path = scenario.or_else(|| config.chinaglia_scenario.as_ref().map(PathBuf::from));
            let scenario = match path {
                Some(p) => HypervectorScenario::from_file(&p)?,
                None => HypervectorScenario::builtin()?,
            };
            if let Some(&first) = seeds.first() {
                println!("ranking for seed {first}:");
                for line in format_ranking(&scenario.run(first)?) {
                    println!("  {line}");
                }
            }
            demo_chinaglia(&config, &scenario, &seeds)?
        }
        Command::Galois { which: GaloisCommand::Run { scenario } } => {
            let scenario = Scenario::from_file(&scenario)?;
            let (report, runs) = run_galois(&config, &scenario, &seeds)?;
            let dir = out.join("traces");
            std::fs::create_dir_all(&dir)?;
            for (seed, run) in &runs {
                write_trace_csv(&dir.join(format!("seed{seed}.csv")), &run.result.trace)?;
            }
            report
        }
    };
    finish(&report, &out, started)
}

fn finish(report: &Report, out: &Path, started: Instant) -> Result<bool> {
    report.write(out)?;
    for (key, value) in &report.summary {
        if key != "ranking_first_seed" {
            println!("{key}: {value}");
        }
    }
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    eprintln!("wrote {} ({} rows) in {:.1}s", out.display(), report.rows.len(), started.elapsed().as_secs_f64());
    Ok(report.ok())
}
