use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::graph::{Distribution, GroundMetricGraph};
use crate::error::{Error, Result};

/// Largest support size accepted by [`w2_exact`].
pub const EXACT_MAX_SUPPORT: usize = 64;

/// A coupling between two distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub pi: DMatrix<f64>,
    /// Total transport cost `Σ π_ij c_ij` under the squared ground cost.
    pub cost_value: f64,
}

impl TransportPlan {
    /// Writes `source,target,mass` rows for every nonzero entry.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["source", "target", "mass"])?;
        for i in 0..self.pi.nrows() {
            for j in 0..self.pi.ncols() {
                let v = self.pi[(i, j)];
                if v > 0.0 {
                    w.write_record([i.to_string(), j.to_string(), format!("{v:.17e}")])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Optimal plan together with dual potentials (`u_i + v_j ≤ c_ij`, with
/// equality on the support of the plan).
#[derive(Clone, Debug)]
pub struct TransportSolution {
    pub plan: TransportPlan,
    pub row_potentials: DVector<f64>,
    pub col_potentials: DVector<f64>,
    pub pivots: usize,
}

/// Exact 2-Wasserstein distance with squared ground cost `g.cost²`.
pub fn w2_exact(p: &Distribution, q: &Distribution, g: &GroundMetricGraph) -> Result<(f64, TransportPlan)> {
    let sol = w2_exact_with_potentials(p, q, g)?;
    Ok((sol.plan.cost_value.max(0.0).sqrt(), sol.plan))
}

/// Like [`w2_exact`] but also returns the dual potentials, which give the
/// gradient of `W2²` with respect to the source weights.
pub fn w2_exact_with_potentials(p: &Distribution, q: &Distribution, g: &GroundMetricGraph) -> Result<TransportSolution> {
    let n = g.n();
    if n > EXACT_MAX_SUPPORT {
        return Err(Error::TooLarge(format!(
            "exact transport supports N ≤ {EXACT_MAX_SUPPORT} (got {n}); use w2_sinkhorn for larger supports"
        )));
    }
    g.check_support(p, "source")?;
    g.check_support(q, "target")?;
    let c = g.cost().map(|x| x * x);
    Ok(solve_transport(p.weights().as_slice(), q.weights().as_slice(), &c))
}

/// Transportation simplex on a dense `m × n` cost matrix. Supplies and
/// demands must be non-negative with equal totals.
pub fn solve_transport(a: &[f64], b: &[f64], c: &DMatrix<f64>) -> TransportSolution {
    let m = a.len();
    let n = b.len();
    let mut flow = DMatrix::<f64>::zeros(m, n);
    let mut basic = vec![false; m * n];
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(m + n - 1);

    // North-west corner start: a staircase spanning tree with m + n − 1 cells.
    let (mut supply, mut demand) = (a.to_vec(), b.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        let x = supply[i].min(demand[j]).max(0.0);
        flow[(i, j)] = x;
        basic[i * n + j] = true;
        basis.push((i, j));
        supply[i] -= x;
        demand[j] -= x;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if i == m - 1 {
            j += 1;
        } else if j == n - 1 || supply[i] <= demand[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    // Absorb rounding residue so marginals hold to machine precision.
    flow[(m - 1, n - 1)] += supply[m - 1].max(0.0).min(demand[n - 1].max(0.0));

    let cmax = c.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let tol = 1e-12 * (1.0 + cmax);
    let bland_after = 20 * m * n + 100;
    let mut u = DVector::zeros(m);
    let mut v = DVector::zeros(n);
    let mut pivots = 0;
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m + n];

    loop {
        for l in adj.iter_mut() {
            l.clear();
        }
        for (k, &(bi, bj)) in basis.iter().enumerate() {
            adj[bi].push((m + bj, k));
            adj[m + bj].push((bi, k));
        }
        compute_potentials(&adj, &basis, c, m, &mut u, &mut v);

        let mut entering: Option<(usize, usize)> = None;
        let mut best = -tol;
        'scan: for ii in 0..m {
            for jj in 0..n {
                if basic[ii * n + jj] {
                    continue;
                }
                let r = c[(ii, jj)] - u[ii] - v[jj];
                if r < best {
                    best = r;
                    entering = Some((ii, jj));
                    if pivots > bland_after {
                        break 'scan;
                    }
                }
            }
        }
        let Some((ei, ej)) = entering else { break };

        // Path in the basis tree from column node ej back to row node ei.
        let path = tree_path(&adj, m + ej, ei, m + n);
        let mut theta = f64::INFINITY;
        let mut leave: Option<usize> = None;
        for (step, &k) in path.iter().enumerate() {
            if step % 2 == 0 {
                let (bi, bj) = basis[k];
                let f = flow[(bi, bj)];
                let better = match leave {
                    None => true,
                    Some(l) => f < theta || (f == theta && basis[k] < basis[l]),
                };
                if better {
                    theta = f;
                    leave = Some(k);
                }
            }
        }
        let leave = leave.expect("cycle always contains a decreasing cell");
        flow[(ei, ej)] = theta;
        for (step, &k) in path.iter().enumerate() {
            let (bi, bj) = basis[k];
            if step % 2 == 0 {
                flow[(bi, bj)] -= theta;
            } else {
                flow[(bi, bj)] += theta;
            }
        }
        let (li, lj) = basis[leave];
        flow[(li, lj)] = 0.0;
        basic[li * n + lj] = false;
        basic[ei * n + ej] = true;
        basis[leave] = (ei, ej);
        pivots += 1;
    }

    let cost_value = flow.component_mul(c).sum();
    TransportSolution {
        plan: TransportPlan { pi: flow, cost_value },
        row_potentials: u,
        col_potentials: v,
        pivots,
    }
}

fn compute_potentials(
    adj: &[Vec<(usize, usize)>],
    basis: &[(usize, usize)],
    c: &DMatrix<f64>,
    m: usize,
    u: &mut DVector<f64>,
    v: &mut DVector<f64>,
) {
    let total = adj.len();
    let mut seen = vec![false; total];
    let mut queue = VecDeque::new();
    u[0] = 0.0;
    seen[0] = true;
    queue.push_back(0);
    while let Some(node) = queue.pop_front() {
        for &(next, k) in &adj[node] {
            if seen[next] {
                continue;
            }
            let (bi, bj) = basis[k];
            if node < m {
                v[bj] = c[(bi, bj)] - u[bi];
            } else {
                u[bi] = c[(bi, bj)] - v[bj];
            }
            seen[next] = true;
            queue.push_back(next);
        }
    }
}

/// Basis-cell indices along the tree path from `from` to `to`, in order.
fn tree_path(adj: &[Vec<(usize, usize)>], from: usize, to: usize, total: usize) -> Vec<usize> {
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; total];
    let mut seen = vec![false; total];
    let mut queue = VecDeque::new();
    seen[from] = true;
    queue.push_back(from);
    while let Some(node) = queue.pop_front() {
        if node == to {
            break;
        }
        for &(next, k) in &adj[node] {
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some((node, k));
                queue.push_back(next);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = to;
    while node != from {
        let (prev, k) = parent[node].expect("basis is a spanning tree");
        path.push(k);
        node = prev;
    }
    path.reverse();
    path
}

/// Writes a `source,target,distance` table of pairwise distances.
pub fn write_distance_csv(path: &Path, rows: &[(String, String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["source", "target", "distance"])?;
    for (a, b, d) in rows {
        w.write_record([a.as_str(), b.as_str(), &format!("{d:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}
