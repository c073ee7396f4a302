use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BenchConfig, ExperimentConfig, TaskFamily};
use super::report::Report;
use super::stats::{censored_summary, CensoredSummary};
use crate::approximator::{train_approximator, ApproximatorConfig, ApproximatorNet, FamilySetup, SyntheticFamily};
use crate::error::{Error, Result};
use crate::geometry::{build_laplacian, metric_tensor, natural_direction, pinv_dense, w2_exact, Distribution, GroundMetricGraph, PinvOperator};
use crate::pc_net::{flatten_row_major, unflatten_row_major, Activation, PCConfig, PCNetwork, WeightPreconditioner};
use crate::util::{derive_seed, median, rng};

pub const VARIANTS: [&str; 3] = ["euclidean", "wasserstein_exact", "wasserstein_approx"];

/// Source of `L(p)†` for the preconditioner.
pub enum PinvMode<'a> {
    Exact,
    Approximate { net: &'a ApproximatorNet, setup: &'a FamilySetup },
}

/// Wasserstein natural-gradient preconditioner for the bottom (softmax)
/// layer of a two-layer network predicting a distribution. The parameter
/// Jacobian of `p = softmax(W h)` is `J = S ⊗ hᵀ` with `S = diag(p) − ppᵀ`.
pub struct WassersteinPreconditioner<'a> {
    pub graph: &'a GroundMetricGraph,
    pub mode: PinvMode<'a>,
    pub relative_damping: f64,
    pub clip_ratio: f64,
}

impl WassersteinPreconditioner<'_> {
    fn l_dagger(&self, p: &Distribution) -> Result<DMatrix<f64>> {
        match &self.mode {
            PinvMode::Exact => pinv_dense(&build_laplacian(p, self.graph)?),
            PinvMode::Approximate { net, setup } => {
                Ok(net.predict_and_reconstruct(p, self.graph, &setup.basis, &setup.codebook, &setup.decode)?.to_dense())
            }
        }
    }
}

impl WeightPreconditioner for WassersteinPreconditioner<'_> {
    fn precondition(&mut self, layer: usize, net: &PCNetwork, grad: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if layer != 0 {
            return Ok(grad.clone());
        }
        let p = net.forward_predict().swap_remove(0);
        let h = &net.states()[1];
        let s = DMatrix::from_diagonal(&p) - &p * p.transpose();
        let (n, k) = (p.len(), h.len());
        let jac = DMatrix::from_fn(n, n * k, |a, c| s[(a, c / k)] * h[c % k]);
        let l_dagger = self.l_dagger(&Distribution::from_unnormalized(p)?)?;
        let core = jac.transpose() * &l_dagger * &jac;
        let mean_eig = core.trace() / core.nrows() as f64;
        let damping = (self.relative_damping * mean_eig).max(crate::geometry::DEFAULT_DAMPING);
        let metric = metric_tensor(PinvOperator::Dense(&l_dagger), &jac, damping)?;
        let g = flatten_row_major(grad);
        let mut step = natural_direction(&g, &metric)?;
        let limit = self.clip_ratio * g.norm();
        if step.norm() > limit {
            step *= limit / step.norm();
        }
        Ok(unflatten_row_major(&step, grad.nrows(), grad.ncols()))
    }
}

/// Target distribution of the benchmark family on `g`: Gaussian mass
/// clusters around the two most distant nodes (bimodal) or the first of
/// them (unimodal).
pub fn bench_target(g: &GroundMetricGraph, task: TaskFamily, width: f64) -> Result<Distribution> {
    let c = g.cost();
    let n = g.n();
    let (mut a, mut b) = (0, 1);
    for i in 0..n {
        for j in (i + 1)..n {
            if c[(i, j)] > c[(a, b)] {
                (a, b) = (i, j);
            }
        }
    }
    let nonzero: Vec<f64> = c.iter().copied().filter(|x| *x > 0.0).collect();
    let s = width * median(&nonzero).unwrap_or(1.0);
    let bump = |center: usize| DVector::from_fn(n, |i, _| (-(c[(i, center)] / s).powi(2) / 2.0).exp());
    let w = match task {
        TaskFamily::Bimodal => bump(a) + bump(b),
        TaskFamily::Unimodal => bump(a),
    };
    Distribution::from_unnormalized(w)
}

/// One variant run on one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub seed: u64,
    pub variant: String,
    /// W2 to the target before the first iteration and after each one.
    pub curve: Vec<f64>,
    pub threshold: f64,
    pub iterations_to_threshold: Option<usize>,
    pub diverged: Option<String>,
}

fn bench_network(cfg: &BenchConfig, n: usize, seed: u64) -> Result<PCNetwork> {
    let mut r = rng(derive_seed(seed, "bench-prior"));
    let prior: Vec<f64> = (0..cfg.hidden).map(|_| StandardNormal.sample(&mut r)).collect();
    let mut pc = PCConfig::new(vec![n, cfg.hidden], Activation::Softmax, cfg.eta_z, cfg.eta_w, derive_seed(seed, "bench-net"));
    pc.top_prior = Some(prior.clone());
    let mut net = PCNetwork::new(&pc)?;
    net.set_state(1, DVector::from_vec(prior))?;
    Ok(net)
}

/// Runs one variant from the seed's initialization. Divergence ends the run
/// early and is recorded rather than returned as an error.
pub fn run_variant(
    cfg: &BenchConfig,
    setup: &FamilySetup,
    approximator: Option<&ApproximatorNet>,
    target: &Distribution,
    variant: &str,
) -> Result<BenchRun> {
    let g = &setup.graph;
    let mut net = bench_network(cfg, g.n(), setup.seed)?;
    let w2 = |net: &PCNetwork| -> Result<f64> { Ok(w2_exact(&Distribution::from_unnormalized(net.forward_predict().swap_remove(0))?, target, g)?.0) };
    let mut curve = vec![w2(&net)?];
    let threshold = cfg.threshold_ratio * curve[0];
    let mode = match variant {
        "euclidean" => None,
        "wasserstein_exact" => Some(PinvMode::Exact),
        "wasserstein_approx" => Some(PinvMode::Approximate {
            net: approximator.ok_or_else(|| Error::Config("approximate variant needs a trained approximator".into()))?,
            setup,
        }),
        other => return Err(Error::UnknownName(other.to_string())),
    };
    let mut pre = mode.map(|mode| WassersteinPreconditioner { graph: g, mode, relative_damping: cfg.relative_damping, clip_ratio: cfg.clip_ratio });
    let q = target.weights().clone();
    let mut diverged = None;
    for _ in 0..cfg.iterations {
        let step = match pre.as_mut() {
            Some(p) => net.micro_iterate(&q, 1, Some(p as &mut dyn WeightPreconditioner)),
            None => net.micro_iterate(&q, 1, None),
        };
        match step.and_then(|_| w2(&net)) {
            Ok(v) => curve.push(v),
            Err(e) => {
                diverged = Some(e.to_string());
                break;
            }
        }
    }
    let iterations_to_threshold = curve.iter().position(|v| *v <= threshold);
    Ok(BenchRun { seed: setup.seed, variant: variant.to_string(), curve, threshold, iterations_to_threshold, diverged })
}

/// All variants for one seed; the approximator is trained on the seed's
/// synthetic family, whose graph is also the benchmark graph.
pub fn run_seed(cfg: &BenchConfig, seed: u64) -> Result<Vec<BenchRun>> {
    let setup = SyntheticFamily::v1().build(seed)?;
    let target = bench_target(&setup.graph, cfg.task, cfg.cluster_width)?;
    let (approximator, _) = train_approximator(&setup.train_pairs(), &ApproximatorConfig { seed: derive_seed(seed, "bench-approximator"), ..Default::default() })?;
    VARIANTS.iter().map(|v| run_variant(cfg, &setup, Some(&approximator), &target, v)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub iterations: CensoredSummary,
    pub final_w2_median: Option<f64>,
    pub diverged: usize,
}

/// `bench compare`: every variant on every seed, seeds in parallel.
pub fn run_bench_compare(config: &ExperimentConfig, seeds: &[u64]) -> Result<Report> {
    let cfg = &config.bench;
    let mut report = Report::new("bench compare", &config.hash(), seeds);
    let mut per_seed: Vec<(u64, Result<Vec<BenchRun>>)> = seeds.par_iter().map(|&s| (s, run_seed(cfg, s))).collect();
    per_seed.sort_by_key(|(s, _)| *s);
    let mut runs = Vec::new();
    for (seed, res) in per_seed {
        match res {
            Ok(r) => runs.extend(r),
            Err(e) => {
                report.push(&format!("bench/setup/seed{seed}"), seed, "setup", "failed", 1.0);
                report.violate(format!("seed {seed}: setup failed: {e}"));
            }
        }
    }
    for run in &runs {
        let id = format!("bench/{}/seed{}", run.variant, run.seed);
        report.push(&id, run.seed, &run.variant, "initial_w2", run.curve[0]);
        report.push(&id, run.seed, &run.variant, "final_w2", *run.curve.last().unwrap_or(&f64::NAN));
        report.push(&id, run.seed, &run.variant, "threshold", run.threshold);
        report.push(&id, run.seed, &run.variant, "iterations_to_threshold", run.iterations_to_threshold.unwrap_or(cfg.iterations) as f64);
        report.push(&id, run.seed, &run.variant, "censored", f64::from(u8::from(run.iterations_to_threshold.is_none())));
        report.push(&id, run.seed, &run.variant, "diverged", f64::from(u8::from(run.diverged.is_some())));
        for (t, v) in run.curve.iter().enumerate() {
            report.push(&id, run.seed, &run.variant, &format!("w2@{t}"), *v);
        }
    }

    // Same seed and variant must reproduce the same curve.
    if let Some(&seed) = seeds.first() {
        let setup = SyntheticFamily::v1().build(seed)?;
        let target = bench_target(&setup.graph, cfg.task, cfg.cluster_width)?;
        let a = run_variant(cfg, &setup, None, &target, "euclidean")?;
        let b = run_variant(cfg, &setup, None, &target, "euclidean")?;
        let same = a.curve.len() == b.curve.len() && a.curve.iter().zip(&b.curve).all(|(x, y)| x.to_bits() == y.to_bits());
        report.set("self_consistent", same);
        if !same {
            report.violate("euclidean variant is not reproducible for a fixed seed");
        }
    }

    let mut summaries = std::collections::BTreeMap::new();
    for v in VARIANTS {
        let mine: Vec<&BenchRun> = runs.iter().filter(|r| r.variant == v).collect();
        let times: Vec<Option<f64>> = mine.iter().map(|r| r.iterations_to_threshold.map(|t| t as f64)).collect();
        let finals: Vec<f64> = mine.iter().filter_map(|r| r.curve.last().copied()).collect();
        summaries.insert(
            v.to_string(),
            VariantSummary { iterations: censored_summary(&times), final_w2_median: median(&finals), diverged: mine.iter().filter(|r| r.diverged.is_some()).count() },
        );
    }
    let euclid_median = summaries["euclidean"].iterations.median;
    for v in ["wasserstein_exact", "wasserstein_approx"] {
        let mine: Vec<&BenchRun> = runs.iter().filter(|r| r.variant == v).collect();
        let wins = mine
            .iter()
            .filter(|r| match (r.iterations_to_threshold, euclid_median) {
                (Some(t), Some(m)) => t as f64 <= m,
                (Some(_), None) => true,
                (None, _) => false,
            })
            .count();
        report.set(&format!("{v}_at_or_below_euclidean_median_fraction"), if mine.is_empty() { 0.0 } else { wins as f64 / mine.len() as f64 });
        // Ratio of censoring-aware medians; null when either median is censored.
        let speedup = match (euclid_median, summaries[v].iterations.median) {
            (Some(e), Some(w)) if w > 0.0 => Some(e / w),
            _ => None,
        };
        report.set(&format!("{v}_median_speedup"), speedup);
    }
    report.set("variants", &summaries);
    report.set("task", cfg.task);
    Ok(report)
}
