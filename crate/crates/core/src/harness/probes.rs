use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ConvexityConfig, ExperimentConfig, LipschitzConfig, ScaleConfig};
use super::report::Report;
use super::stats::{correlation, histogram};
use crate::error::Result;
use crate::galois::GaussianChainMap;
use crate::geometry::{
    build_laplacian, jacobian_fd, metric_tensor, natural_direction, pinv_dense, w2_exact, w2_squared_gradient, Distribution, GroundMetricGraph,
    PinvOperator, DEFAULT_DAMPING,
};
use crate::util::{derive_seed, quantile, rng, softmax};

fn planar_graph(n: usize, seed: u64) -> Result<GroundMetricGraph> {
    let mut r = rng(seed);
    let points: Vec<DVector<f64>> = (0..n).map(|_| DVector::from_fn(2, |_, _| r.random::<f64>())).collect();
    GroundMetricGraph::from_points(&points)
}

/// The one-node-versus-rest softmax family: node 0 carries
/// `a(θ) = e^θ / (e^θ + N − 1)` and the remaining mass is spread evenly.
pub fn one_vs_rest(theta: f64, n: usize) -> Result<Distribution> {
    let mut logits = DVector::zeros(n);
    logits[0] = theta;
    Distribution::new(softmax(&logits))
}

/// Lipschitz constant of `θ ↦ W2(δ_k, p(θ))` on the one-vs-rest family.
///
/// Against a point mass every coupling is forced, so `W2² = Σ pᵢ cᵢₖ²` is
/// affine in `a`: `f(a) = a·A + (1 − a)·B` with `A = c₀ₖ²` and `B` the mean
/// of `cᵢₖ²` over `i ≥ 1`. Then `dW2/dθ = (A − B)·a(1 − a) / (2√f)`, and
/// `a(1 − a) ≤ 1/4`, `f ≥ min(A, B)` give `L = |A − B| / (8√min(A, B))`.
pub fn analytic_lipschitz(g: &GroundMetricGraph, k: usize) -> f64 {
    let c = g.cost();
    let n = g.n();
    let a = c[(0, k)].powi(2);
    let b = (1..n).map(|i| c[(i, k)].powi(2)).sum::<f64>() / (n - 1) as f64;
    if a == b {
        0.0
    } else {
        (a - b).abs() / (8.0 * a.min(b).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzOutcome {
    pub analytic_l: f64,
    pub tested_l: f64,
    pub empirical_l98: f64,
    pub max_ratio: f64,
    pub violation_fraction: f64,
    pub scale_correlation: Option<f64>,
    pub scale_ratio_histogram: Vec<usize>,
    pub triangle_violations: usize,
}

pub fn lipschitz_probe(cfg: &LipschitzConfig, seed: u64) -> Result<LipschitzOutcome> {
    let g = planar_graph(cfg.nodes, derive_seed(seed, "lipschitz-graph"))?;
    let k = cfg.target_node.clamp(1, cfg.nodes - 1);
    let q = Distribution::point_mass(cfg.nodes, k)?;
    let analytic = if cfg.constant_family { 0.0 } else { analytic_lipschitz(&g, k) };
    let tested = cfg.asserted_l.unwrap_or(analytic);
    let family = |t: f64| if cfg.constant_family { Distribution::uniform(cfg.nodes) } else { one_vs_rest(t, cfg.nodes) };
    let mut r = rng(derive_seed(seed, "lipschitz-pairs"));
    let (mut ratios, mut internal, mut external) = (Vec::new(), Vec::new(), Vec::new());
    let (mut violations, mut triangle) = (0usize, 0usize);
    for _ in 0..cfg.pairs {
        let t1 = r.random_range(-cfg.theta_range..=cfg.theta_range);
        let t2 = r.random_range(-cfg.theta_range..=cfg.theta_range);
        let dt = (t1 - t2).abs();
        if dt == 0.0 {
            continue;
        }
        let (p1, p2) = (family(t1)?, family(t2)?);
        let ext = (w2_exact(&q, &p1, &g)?.0 - w2_exact(&q, &p2, &g)?.0).abs();
        let int = w2_exact(&p1, &p2, &g)?.0;
        ratios.push(ext / dt);
        if ext > tested * dt + 1e-10 {
            violations += 1;
        }
        if ext > int + 1e-9 {
            triangle += 1;
        }
        internal.push(int);
        external.push(ext);
    }
    let scale: Vec<f64> = internal.iter().zip(&external).filter(|(i, _)| **i > 0.0).map(|(i, e)| e / i).collect();
    Ok(LipschitzOutcome {
        analytic_l: analytic,
        tested_l: tested,
        empirical_l98: quantile(&ratios, 0.98).unwrap_or(0.0),
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        violation_fraction: if ratios.is_empty() { 0.0 } else { violations as f64 / ratios.len() as f64 },
        scale_correlation: correlation(&internal, &external),
        scale_ratio_histogram: histogram(&scale, 0.0, 1.0, cfg.histogram_bins),
        triangle_violations: triangle,
    })
}

pub fn run_probe_lipschitz(config: &ExperimentConfig, seeds: &[u64]) -> Result<Report> {
    let cfg = &config.lipschitz;
    let mut report = Report::new("probe lipschitz", &config.hash(), seeds);
    let outcomes: Vec<Result<LipschitzOutcome>> = seeds.par_iter().map(|&s| lipschitz_probe(cfg, s)).collect();
    let mut all = Vec::new();
    for (&seed, o) in seeds.iter().zip(outcomes) {
        let o = o?;
        let id = format!("lipschitz/seed{seed}");
        report.push(&id, seed, "one_vs_rest", "analytic_l", o.analytic_l);
        report.push(&id, seed, "one_vs_rest", "empirical_l98", o.empirical_l98);
        report.push(&id, seed, "one_vs_rest", "max_ratio", o.max_ratio);
        report.push(&id, seed, "one_vs_rest", "violation_fraction", o.violation_fraction);
        report.push(&id, seed, "one_vs_rest", "scale_correlation", o.scale_correlation.unwrap_or(f64::NAN));
        report.push(&id, seed, "one_vs_rest", "triangle_violations", o.triangle_violations as f64);
        if cfg.asserted_l.is_none() && o.violation_fraction > 0.0 {
            report.violate(format!("seed {seed}: ratios exceed the analytic Lipschitz bound"));
        }
        if o.triangle_violations > 0 {
            report.violate(format!("seed {seed}: external cost change exceeded the internal shift"));
        }
        all.push(o);
    }
    report.set("outcomes", &all);
    report.set("max_violation_fraction", all.iter().map(|o| o.violation_fraction).fold(0.0, f64::max));
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleOutcome {
    pub correlation: Option<f64>,
    pub ratio_histogram: Vec<usize>,
    pub mean_ratio: f64,
    pub triangle_violations: usize,
}

/// Internal shift `W2(p(θ₁), p(θ₂))` against the external cost change
/// `|W2(q, p(θ₁)) − W2(q, p(θ₂))|` on a random softmax family.
pub fn scale_probe(cfg: &ScaleConfig, seed: u64) -> Result<ScaleOutcome> {
    let g = planar_graph(cfg.nodes, derive_seed(seed, "scale-graph"))?;
    let mut r = rng(derive_seed(seed, "scale-family"));
    let a = DMatrix::from_fn(cfg.nodes, cfg.params, |_, _| {
        let z: f64 = StandardNormal.sample(&mut r);
        1.5 * z
    });
    let draw = |r: &mut rand_chacha::ChaCha8Rng| DVector::from_fn(cfg.params, |_, _| r.random_range(-1.0..1.0));
    let family = |t: &DVector<f64>| Distribution::new(softmax(&(&a * t)));
    let q = family(&draw(&mut r))?;
    let (mut internal, mut external, mut ratios) = (Vec::new(), Vec::new(), Vec::new());
    let mut triangle = 0;
    for _ in 0..cfg.pairs {
        let (p1, p2) = (family(&draw(&mut r))?, family(&draw(&mut r))?);
        let int = w2_exact(&p1, &p2, &g)?.0;
        let ext = (w2_exact(&q, &p1, &g)?.0 - w2_exact(&q, &p2, &g)?.0).abs();
        if ext > int + 1e-9 {
            triangle += 1;
        }
        if int > 0.0 {
            ratios.push(ext / int);
        }
        internal.push(int);
        external.push(ext);
    }
    Ok(ScaleOutcome {
        correlation: correlation(&internal, &external),
        ratio_histogram: histogram(&ratios, 0.0, 1.0, cfg.histogram_bins),
        mean_ratio: if ratios.is_empty() { 0.0 } else { ratios.iter().sum::<f64>() / ratios.len() as f64 },
        triangle_violations: triangle,
    })
}

pub fn run_probe_scale(config: &ExperimentConfig, seeds: &[u64]) -> Result<Report> {
    let mut report = Report::new("probe scale", &config.hash(), seeds);
    let outcomes: Vec<Result<ScaleOutcome>> = seeds.par_iter().map(|&s| scale_probe(&config.scale, s)).collect();
    let mut all = Vec::new();
    for (&seed, o) in seeds.iter().zip(outcomes) {
        let o = o?;
        let id = format!("scale/seed{seed}");
        report.push(&id, seed, "softmax", "correlation", o.correlation.unwrap_or(f64::NAN));
        report.push(&id, seed, "softmax", "mean_ratio", o.mean_ratio);
        report.push(&id, seed, "softmax", "triangle_violations", o.triangle_violations as f64);
        if o.triangle_violations > 0 {
            report.violate(format!("seed {seed}: external cost change exceeded the internal shift"));
        }
        all.push(o);
    }
    report.set("outcomes", &all);
    Ok(report)
}

/// One descent run of the convexity probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentRun {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
    pub final_objective: f64,
    /// Every accepted step strictly decreased the objective.
    pub monotone: bool,
    pub reached_optimum: bool,
}

/// Location family on a path graph with an optional sinusoidal bump term.
pub struct LocationProblem {
    pub map: GaussianChainMap,
    pub graph: GroundMetricGraph,
    pub target: Distribution,
    pub bump_amplitude: f64,
    pub bump_frequency: f64,
}

impl LocationProblem {
    pub fn new(cfg: &ConvexityConfig, center: f64, bump_amplitude: f64) -> Result<Self> {
        let map = GaussianChainMap { support: cfg.nodes, width: cfg.width };
        Ok(Self { target: map.at(center)?, map, graph: GroundMetricGraph::path(cfg.nodes)?, bump_amplitude, bump_frequency: cfg.bump_frequency })
    }

    fn bump(&self, t: f64) -> (f64, f64) {
        let w = 2.0 * std::f64::consts::PI * self.bump_frequency;
        (self.bump_amplitude * (w * t).sin(), self.bump_amplitude * w * (w * t).cos())
    }

    /// `W2(p(θ), q)`.
    pub fn distance(&self, t: f64) -> Result<f64> {
        Ok(w2_exact(&self.map.at(t)?, &self.target, &self.graph)?.0)
    }

    /// `W2²(p(θ), q) + ε sin(2πfθ)`.
    pub fn objective(&self, t: f64) -> Result<f64> {
        Ok(self.distance(t)?.powi(2) + self.bump(t).0)
    }

    /// Natural-gradient direction `G⁻¹ ∂objective/∂θ`.
    pub fn direction(&self, t: f64) -> Result<f64> {
        let theta = DVector::from_element(1, t);
        let model = |x: &DVector<f64>| self.map.at(x[0]);
        let p = model(&theta)?;
        let jac = jacobian_fd(model, &theta, 1e-6)?;
        let (_, mut grad) = w2_squared_gradient(&p, &self.target, &self.graph, &jac)?;
        grad[0] += self.bump(t).1;
        let l_dagger = pinv_dense(&build_laplacian(&p, &self.graph)?)?;
        let metric = metric_tensor(PinvOperator::Dense(&l_dagger), &jac, DEFAULT_DAMPING)?;
        Ok(natural_direction(&grad, &metric)?[0])
    }

    /// Minimum of the objective over a grid on `[0, N − 1]`.
    pub fn grid_optimum(&self, step: f64) -> Result<(f64, f64)> {
        let hi = (self.map.support - 1) as f64;
        let count = (hi / step).round() as usize;
        let mut best = (0.0, f64::INFINITY);
        for i in 0..=count {
            let t = i as f64 * step;
            let v = self.objective(t)?;
            if v < best.1 {
                best = (t, v);
            }
        }
        Ok(best)
    }

    /// Natural-gradient descent with backtracking: the step is halved until
    /// the objective strictly decreases, and the run stops when no step of
    /// at least `1e-12` does.
    pub fn descend(&self, start: f64, eta: f64, max_steps: usize, optimum: f64, tol: f64) -> Result<DescentRun> {
        let mut t = start;
        let mut value = self.objective(t)?;
        let mut steps = 0;
        let mut monotone = true;
        while steps < max_steps && value > 0.0 {
            let d = self.direction(t)?;
            if d == 0.0 || !d.is_finite() {
                break;
            }
            let mut scale = eta;
            let mut accepted = None;
            while (scale * d).abs() >= 1e-12 {
                let trial = t - scale * d;
                let v = self.objective(trial)?;
                if v < value {
                    accepted = Some((trial, v));
                    break;
                }
                scale *= 0.5;
            }
            let Some((next, v)) = accepted else { break };
            monotone &= v < value;
            t = next;
            value = v;
            steps += 1;
        }
        Ok(DescentRun { start, end: t, steps, final_objective: value, monotone, reached_optimum: value <= optimum + tol })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityOutcome {
    pub bump_amplitude: f64,
    pub center: f64,
    pub grid_optimum: f64,
    pub runs: Vec<DescentRun>,
    pub reached_fraction: f64,
    pub monotone_fraction: f64,
}

/// Runs `cfg.starts` descents on the location family (bumped when
/// `bump_amplitude > 0`). Success compares the final W2 (unbumped) or the
/// final objective (bumped) with the grid optimum within `cfg.tolerance`.
pub fn convexity_probe(cfg: &ConvexityConfig, seed: u64, bump_amplitude: f64) -> Result<ConvexityOutcome> {
    let mut r = rng(derive_seed(seed, "convexity"));
    let hi = (cfg.nodes - 1) as f64;
    let center = r.random_range(1.0..hi - 1.0);
    let problem = LocationProblem::new(cfg, center, bump_amplitude)?;
    let (_, grid_value) = problem.grid_optimum(cfg.grid_step)?;
    let starts: Vec<f64> = (0..cfg.starts).map(|_| r.random_range(0.0..hi)).collect();
    let mut runs = Vec::with_capacity(starts.len());
    for s in starts {
        let mut run = problem.descend(s, cfg.eta, cfg.max_steps, grid_value, cfg.tolerance)?;
        if bump_amplitude == 0.0 {
            run.reached_optimum = problem.distance(run.end)? <= grid_value.max(0.0).sqrt() + cfg.tolerance;
        }
        runs.push(run);
    }
    let n = runs.len().max(1) as f64;
    Ok(ConvexityOutcome {
        bump_amplitude,
        center,
        grid_optimum: grid_value,
        reached_fraction: runs.iter().filter(|r| r.reached_optimum).count() as f64 / n,
        monotone_fraction: runs.iter().filter(|r| r.monotone).count() as f64 / n,
        runs,
    })
}

pub fn run_probe_convexity(config: &ExperimentConfig, seeds: &[u64]) -> Result<Report> {
    let cfg = &config.convexity;
    let mut report = Report::new("probe convexity", &config.hash(), seeds);
    let mut amplitudes = vec![0.0];
    amplitudes.extend(cfg.bump_amplitudes.iter().copied());
    let jobs: Vec<(u64, f64)> = seeds.iter().flat_map(|&s| amplitudes.iter().map(move |&a| (s, a))).collect();
    let outcomes: Vec<Result<ConvexityOutcome>> = jobs.par_iter().map(|&(s, a)| convexity_probe(cfg, s, a)).collect();
    let mut all = Vec::new();
    for (&(seed, amp), o) in jobs.iter().zip(outcomes) {
        let o = o?;
        let variant = if amp == 0.0 { "unimodal".to_string() } else { format!("bumps_{amp}") };
        for (i, run) in o.runs.iter().enumerate() {
            let id = format!("convexity/{variant}/seed{seed}/start{i}");
            report.push(&id, seed, &variant, "steps", run.steps as f64);
            report.push(&id, seed, &variant, "final_objective", run.final_objective);
            report.push(&id, seed, &variant, "reached_optimum", f64::from(u8::from(run.reached_optimum)));
            report.push(&id, seed, &variant, "monotone", f64::from(u8::from(run.monotone)));
        }
        if o.monotone_fraction < 1.0 {
            report.violate(format!("seed {seed}, {variant}: an accepted step did not decrease the objective"));
        }
        all.push((variant, o));
    }
    let fraction = |name: &str| {
        let v: Vec<f64> = all.iter().filter(|(n, _)| n == name).map(|(_, o)| o.reached_fraction).collect();
        if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 }
    };
    report.set("unimodal_reached_fraction", fraction("unimodal"));
    for a in &cfg.bump_amplitudes {
        report.set(&format!("bumps_{a}_escape_rate"), fraction(&format!("bumps_{a}")));
    }
    report.set(
        "outcomes",
        all.iter().map(|(n, o)| serde_json::json!({"variant": n, "center": o.center, "reached_fraction": o.reached_fraction, "monotone_fraction": o.monotone_fraction})).collect::<Vec<_>>(),
    );
    Ok(report)
}
