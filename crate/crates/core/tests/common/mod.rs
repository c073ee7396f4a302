//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use actpc_geom::geometry::{Distribution, GroundMetricGraph};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Distribution {
    let w = DVector::from_fn(n, |_, _| rng.random::<f64>() + 1e-3);
    Distribution::from_unnormalized(w).unwrap()
}

/// Random planar points with Euclidean cost and derived omega.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> GroundMetricGraph {
    let pts: Vec<DVector<f64>> = (0..n).map(|_| DVector::from_fn(2, |_, _| rng.random::<f64>())).collect();
    GroundMetricGraph::from_points(&pts).unwrap()
}

/// Random sparse-ish graph: each edge kept with probability `keep`.
pub fn random_sparse_graph(rng: &mut ChaCha8Rng, n: usize, keep: f64) -> GroundMetricGraph {
    let mut omega = DMatrix::zeros(n, n);
    let mut cost = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let c = rng.random::<f64>() + 0.1;
            cost[(i, j)] = c;
            cost[(j, i)] = c;
            if rng.random::<f64>() < keep {
                let w = rng.random::<f64>() + 0.05;
                omega[(i, j)] = w;
                omega[(j, i)] = w;
            }
        }
    }
    GroundMetricGraph::new(omega, cost).unwrap()
}

/// Minimum transport cost by enumerating every spanning-tree basis of the
/// transportation polytope (all basic feasible solutions).
pub fn vertex_enumeration_cost(a: &[f64], b: &[f64], c: &DMatrix<f64>) -> f64 {
    let m = a.len();
    let n = b.len();
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = m + n - 1;
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let chosen: Vec<(usize, usize)> = idx.iter().map(|&t| cells[t]).collect();
        if let Some(flow) = tree_flow(&chosen, a, b) {
            if flow.iter().all(|f| *f >= -1e-12) {
                let cost: f64 = chosen.iter().zip(&flow).map(|(&(i, j), f)| f * c[(i, j)]).sum();
                best = best.min(cost);
            }
        }
        let total = cells.len();
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == pos - 1 + total - k {
            pos -= 1;
        }
        if pos == 0 {
            return best;
        }
        idx[pos - 1] += 1;
        for t in pos..k {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

/// Solves flows on a candidate basis by leaf peeling; `None` if the cells do
/// not form a spanning tree of the bipartite row/column graph.
fn tree_flow(cells: &[(usize, usize)], a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let m = a.len();
    let n = b.len();
    let mut supply: Vec<f64> = a.iter().chain(b.iter()).cloned().collect();
    let mut alive = vec![true; cells.len()];
    let mut flow = vec![0.0; cells.len()];
    let mut remaining = cells.len();
    while remaining > 0 {
        let mut degree = vec![0usize; m + n];
        for (t, &(i, j)) in cells.iter().enumerate() {
            if alive[t] {
                degree[i] += 1;
                degree[m + j] += 1;
            }
        }
        let mut progressed = false;
        for (t, &(i, j)) in cells.iter().enumerate() {
            if !alive[t] {
                continue;
            }
            let (leaf, other) = if degree[i] == 1 {
                (i, m + j)
            } else if degree[m + j] == 1 {
                (m + j, i)
            } else {
                continue;
            };
            flow[t] = supply[leaf];
            supply[other] -= supply[leaf];
            supply[leaf] = 0.0;
            alive[t] = false;
            remaining -= 1;
            progressed = true;
            break;
        }
        if !progressed {
            return None;
        }
    }
    // every node must have been covered: spanning tree has m + n − 1 edges and no cycle
    if supply.iter().any(|s| s.abs() > 1e-9) {
        return None;
    }
    Some(flow)
}

/// Dense eigenvalues of a symmetric matrix, ascending.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Pseudoinverse of a connected graph Laplacian via `(L + 11ᵀ/n)⁻¹ − 11ᵀ/n`.
pub fn connected_laplacian_pinv(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    (l + &j).try_inverse().expect("connected Laplacian plus 11ᵀ/n is invertible") - j
}
