use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability mass over `N` support points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct Distribution {
    weights: DVector<f64>,
    support_ids: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistribution {
    weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support_ids: Option<Vec<String>>,
}

impl TryFrom<RawDistribution> for Distribution {
    type Error = Error;
    fn try_from(raw: RawDistribution) -> Result<Self> {
        let d = Distribution::new(DVector::from_vec(raw.weights))?;
        match raw.support_ids {
            Some(ids) => d.with_support_ids(ids),
            None => Ok(d),
        }
    }
}

impl From<Distribution> for RawDistribution {
    fn from(d: Distribution) -> Self {
        RawDistribution { weights: d.weights.as_slice().to_vec(), support_ids: d.support_ids }
    }
}

impl Distribution {
    /// Validates non-negativity and unit mass (within `1e-9`).
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("no support points".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!("weight {w} is negative or non-finite")));
        }
        let total = weights.sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
        }
        Ok(Self { weights, support_ids: None })
    }

    /// Normalizes a non-negative vector with positive total mass.
    pub fn from_unnormalized(weights: DVector<f64>) -> Result<Self> {
        let total = weights.sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!("total mass {total} cannot be normalized")));
        }
        Self::new(weights / total)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution("no support points".into()));
        }
        Self::new(DVector::from_element(n, 1.0 / n as f64))
    }

    pub fn point_mass(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::InvalidDistribution(format!("node {i} outside support of size {n}")));
        }
        let mut w = DVector::zeros(n);
        w[i] = 1.0;
        Self::new(w)
    }

    pub fn with_support_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.weights.len() {
            return Err(Error::Dimension(format!("{} ids for {} weights", ids.len(), self.weights.len())));
        }
        self.support_ids = Some(ids);
        Ok(self)
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn support_ids(&self) -> Option<&[String]> {
        self.support_ids.as_deref()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.weights.iter().filter(|w| **w > 0.0).map(|w| w * w.ln()).sum::<f64>()
    }

    /// Reorders support points: entry `i` of the result is entry `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let w = DVector::from_iterator(perm.len(), perm.iter().map(|&i| self.weights[i]));
        Self::new(w)
    }
}

/// Pairwise adjacency weights `omega` and transport costs `cost` over `N` nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct GroundMetricGraph {
    omega: DMatrix<f64>,
    cost: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    omega: Vec<Vec<f64>>,
    cost: Vec<Vec<f64>>,
}

fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("matrix rows must all have length N".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

impl TryFrom<RawGraph> for GroundMetricGraph {
    type Error = Error;
    fn try_from(raw: RawGraph) -> Result<Self> {
        GroundMetricGraph::new(from_rows(&raw.omega)?, from_rows(&raw.cost)?)
    }
}

impl From<GroundMetricGraph> for RawGraph {
    fn from(g: GroundMetricGraph) -> Self {
        RawGraph { omega: to_rows(&g.omega), cost: to_rows(&g.cost) }
    }
}

fn check_metric_matrix(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension(format!("{name} is {}x{}", n, m.ncols())));
    }
    for i in 0..n {
        if m[(i, i)] != 0.0 {
            return Err(Error::InvalidDomain(format!("{name} diagonal entry {i} is nonzero")));
        }
        for j in 0..n {
            let v = m[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidDomain(format!("{name}[{i},{j}] = {v}")));
            }
            if (v - m[(j, i)]).abs() > 1e-12 {
                return Err(Error::InvalidDomain(format!("{name} is not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

impl GroundMetricGraph {
    /// Validates symmetry, zero diagonals, finiteness and non-negativity.
    pub fn new(omega: DMatrix<f64>, cost: DMatrix<f64>) -> Result<Self> {
        check_metric_matrix("omega", &omega)?;
        check_metric_matrix("cost", &cost)?;
        if omega.nrows() != cost.nrows() {
            return Err(Error::Dimension("omega and cost sizes differ".into()));
        }
        Ok(Self { omega, cost })
    }

    /// Derives `omega_ij = exp(−cost_ij² / σ²)` for `i ≠ j`. When `sigma` is
    /// `None` the median nonzero cost is used.
    pub fn from_cost(cost: DMatrix<f64>, sigma: Option<f64>) -> Result<Self> {
        check_metric_matrix("cost", &cost)?;
        let n = cost.nrows();
        let sigma = match sigma {
            Some(s) if s > 0.0 => s,
            Some(s) => return Err(Error::InvalidDomain(format!("sigma {s} must be positive"))),
            None => {
                let nonzero: Vec<f64> = cost.iter().cloned().filter(|c| *c > 0.0).collect();
                crate::util::median(&nonzero).unwrap_or(1.0)
            }
        };
        let omega = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                (-(cost[(i, j)] / sigma).powi(2)).exp()
            }
        });
        Self::new(omega, cost)
    }

    /// Points in Euclidean space, Euclidean cost, derived omega.
    pub fn from_points(points: &[DVector<f64>]) -> Result<Self> {
        let n = points.len();
        let cost = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (&points[i] - &points[j]).norm() });
        Self::from_cost(cost, None)
    }

    /// Path graph on `n` nodes with cost `|i − j|` and nearest-neighbour adjacency.
    pub fn path(n: usize) -> Result<Self> {
        let cost = DMatrix::from_fn(n, n, |i, j| (i as f64 - j as f64).abs());
        let omega = DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 });
        Self::new(omega, cost)
    }

    pub fn n(&self) -> usize {
        self.omega.nrows()
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn cost(&self) -> &DMatrix<f64> {
        &self.cost
    }

    /// Relabels nodes: node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = perm.len();
        let omega = DMatrix::from_fn(n, n, |i, j| self.omega[(perm[i], perm[j])]);
        let cost = DMatrix::from_fn(n, n, |i, j| self.cost[(perm[i], perm[j])]);
        Self::new(omega, cost)
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub(crate) fn check_support(&self, p: &Distribution, what: &str) -> Result<()> {
        if p.len() != self.n() {
            return Err(Error::Dimension(format!("{what} has {} points, graph has {}", p.len(), self.n())));
        }
        Ok(())
    }
}
