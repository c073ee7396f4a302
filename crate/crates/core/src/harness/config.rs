use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::sha256_hex;

/// Half-open seed range `start..end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl SeedRange {
    pub fn seeds(&self) -> Vec<u64> {
        (self.start..self.end).collect()
    }
}

impl std::str::FromStr for SeedRange {
    type Err = Error;

    /// Parses `a..b`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s.split_once("..").ok_or_else(|| Error::Config(format!("seed range `{s}` is not of the form a..b")))?;
        let parse = |t: &str| t.trim().parse::<u64>().map_err(|e| Error::Config(format!("seed range bound `{t}`: {e}")));
        let range = SeedRange { start: parse(a)?, end: parse(b)? };
        if range.end <= range.start {
            return Err(Error::Config(format!("seed range `{s}` is empty")));
        }
        Ok(range)
    }
}

/// Target family of the convergence benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    /// Two well-separated mass clusters.
    Bimodal,
    /// One mass cluster.
    Unimodal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub task: TaskFamily,
    /// Width of the free latent layer.
    pub hidden: usize,
    pub iterations: usize,
    pub eta_z: f64,
    pub eta_w: f64,
    /// Threshold on W2 as a fraction of the initial W2.
    pub threshold_ratio: f64,
    /// Damping floor relative to the mean eigenvalue of `JᵀL†J`.
    pub relative_damping: f64,
    /// Preconditioned steps are clipped to this multiple of the Euclidean gradient norm.
    pub clip_ratio: f64,
    /// Cluster width of the target family, in units of the median ground cost.
    pub cluster_width: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            task: TaskFamily::Bimodal,
            hidden: 4,
            iterations: 300,
            eta_z: 0.1,
            eta_w: 0.5,
            threshold_ratio: 0.25,
            relative_damping: 1e-3,
            clip_ratio: 4.0,
            cluster_width: 0.35,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LipschitzConfig {
    pub nodes: usize,
    pub pairs: usize,
    /// Parameters are drawn uniformly from `[−theta_range, theta_range]`.
    pub theta_range: f64,
    /// Target node of the point-mass target (never node 0, the varying node).
    pub target_node: usize,
    /// A Lipschitz constant to test against; the analytic bound when absent.
    pub asserted_l: Option<f64>,
    /// Use a constant family (all parameters give the uniform distribution).
    pub constant_family: bool,
    pub histogram_bins: usize,
}

impl Default for LipschitzConfig {
    fn default() -> Self {
        Self { nodes: 6, pairs: 10_000, theta_range: 4.0, target_node: 1, asserted_l: None, constant_family: false, histogram_bins: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvexityConfig {
    pub nodes: usize,
    pub width: f64,
    pub starts: usize,
    pub max_steps: usize,
    pub eta: f64,
    pub tolerance: f64,
    pub grid_step: f64,
    pub bump_amplitudes: Vec<f64>,
    /// Bumps per unit of the location parameter.
    pub bump_frequency: f64,
}

impl Default for ConvexityConfig {
    fn default() -> Self {
        Self {
            nodes: 8,
            width: 0.8,
            starts: 50,
            max_steps: 200,
            eta: 1.0,
            tolerance: 1e-3,
            grid_step: 1e-3,
            bump_amplitudes: vec![0.01, 0.05],
            bump_frequency: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleConfig {
    pub nodes: usize,
    pub params: usize,
    pub pairs: usize,
    pub histogram_bins: usize,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self { nodes: 6, params: 2, pairs: 2000, histogram_bins: 10 }
    }
}

/// Everything a harness run reads. Unknown keys are rejected at every level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Option<SeedRange>,
    pub bench: BenchConfig,
    pub lipschitz: LipschitzConfig,
    pub convexity: ConvexityConfig,
    pub scale: ScaleConfig,
    /// Scenario file for `demo chinaglia`; the built-in scenario when absent.
    pub chinaglia_scenario: Option<String>,
    pub out: Option<String>,
}

pub const DEFAULT_SEEDS: SeedRange = SeedRange { start: 0, end: 20 };

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.unwrap_or(DEFAULT_SEEDS).seeds()
    }

    /// SHA-256 of the compact JSON serialization (fields in declaration order).
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).unwrap_or_default().as_bytes())
    }
}
