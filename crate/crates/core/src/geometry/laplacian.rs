use nalgebra::{DMatrix, DVector};

use super::graph::{Distribution, GroundMetricGraph};
use crate::error::{Error, Result};
use crate::factor::FactorTriple;
use crate::util::sym_eigen_desc;

/// `L(p) = D − W` with `W_ij = ω_ij (p_i + p_j)`.
#[derive(Clone, Debug)]
pub struct MeasureLaplacian {
    pub matrix: DMatrix<f64>,
    pub source_distribution: Distribution,
}

/// Builds the measure-dependent Laplacian of `p` on `g`.
pub fn build_laplacian(p: &Distribution, g: &GroundMetricGraph) -> Result<MeasureLaplacian> {
    let n = g.n();
    if n < 2 {
        return Err(Error::InvalidDomain(format!("Laplacian needs at least 2 nodes, got {n}")));
    }
    g.check_support(p, "distribution")?;
    let w = p.weights();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let a = g.omega()[(i, j)] * (w[i] + w[j]);
            m[(i, j)] = -a;
            m[(j, i)] = -a;
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = -off;
    }
    Ok(MeasureLaplacian { matrix: m, source_distribution: p.clone() })
}

/// Result of [`pinv_lowrank`].
#[derive(Clone, Debug)]
pub struct LowRankPinv {
    pub factors: FactorTriple,
    pub requested_rank: usize,
    /// Set when the Laplacian has a kernel larger than the constant vector
    /// (disconnected support) and fewer than `requested_rank` directions exist.
    pub reduced_rank_warning: bool,
}

impl LowRankPinv {
    pub fn effective_rank(&self) -> usize {
        self.factors.rank()
    }
}

fn positive_spectrum(l: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>, usize)> {
    let (vals, vecs) = sym_eigen_desc(l);
    let top = vals.iter().cloned().fold(0.0_f64, f64::max);
    if !(top > 0.0) {
        return Err(Error::InvalidDomain("Laplacian is zero (fully disconnected support)".into()));
    }
    let tol = top * 1e-10;
    let positive = vals.iter().filter(|v| **v > tol).count();
    Ok((vals, vecs, positive))
}

/// Top-`r` eigenpairs of `L†`, excluding the kernel.
///
/// The largest eigenvalues of `L†` are the reciprocals of the smallest
/// positive eigenvalues of `L`.
pub fn pinv_lowrank(l: &MeasureLaplacian, r: usize) -> Result<LowRankPinv> {
    let n = l.matrix.nrows();
    if r == 0 || r + 1 > n {
        return Err(Error::InvalidDomain(format!("rank {r} outside 1..={}", n.saturating_sub(1))));
    }
    let (vals, vecs, positive) = positive_spectrum(&l.matrix)?;
    let k = r.min(positive);
    // vals are descending: positive eigenvalues occupy indices 0..positive.
    let idx: Vec<usize> = (0..k).map(|t| positive - 1 - t).collect();
    let mut u = DMatrix::zeros(n, k);
    let mut sigma = DVector::zeros(k);
    for (c, &i) in idx.iter().enumerate() {
        u.set_column(c, &vecs.column(i));
        sigma[c] = 1.0 / vals[i];
    }
    Ok(LowRankPinv {
        factors: FactorTriple::symmetric(u, sigma),
        requested_rank: r,
        reduced_rank_warning: k < r,
    })
}

/// Dense Moore–Penrose pseudoinverse of a Laplacian via its eigendecomposition.
pub fn pinv_dense(l: &MeasureLaplacian) -> Result<DMatrix<f64>> {
    let n = l.matrix.nrows();
    let (vals, vecs, positive) = positive_spectrum(&l.matrix)?;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..positive {
        let v = vecs.column(i);
        out += (v * v.transpose()) / vals[i];
    }
    Ok(out)
}
