//! Rank-r factorizations of symmetric operators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::sym_eigen_desc;

/// A rank-r factorization `U diag(Σ) Vᵀ`.
///
/// For the symmetric operators handled here `V = U`. Columns of `U` are
/// orthonormal and `Σ` is non-negative and sorted non-increasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorTriple {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl FactorTriple {
    /// Builds a symmetric triple (`V = U`).
    pub fn symmetric(u: DMatrix<f64>, sigma: DVector<f64>) -> Self {
        let v = u.clone();
        Self { u, sigma, v }
    }

    /// Number of rows of the represented operator.
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Dense `U diag(Σ) Vᵀ`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// Row-major flattening of the dense operator. Unlike the raw factors it
    /// does not depend on eigenvector signs.
    pub fn flatten(&self) -> DVector<f64> {
        let d = self.to_dense();
        let n = d.nrows();
        DVector::from_iterator(n * n, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| d[(i, j)]))
    }

    /// Best rank-r factorization of a symmetric positive-semidefinite matrix:
    /// its top-r eigenpairs, with negative eigenvalues clipped to zero.
    pub fn from_symmetric(m: &DMatrix<f64>, r: usize) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!("{}x{} operator is not square", m.nrows(), m.ncols())));
        }
        if r == 0 || r > m.nrows() {
            return Err(Error::InvalidDomain(format!("rank {r} outside 1..={}", m.nrows())));
        }
        let (vals, vecs) = sym_eigen_desc(m);
        let u = vecs.columns(0, r).into_owned();
        let sigma = DVector::from_iterator(r, vals.iter().take(r).map(|v| v.max(0.0)));
        Ok(Self::symmetric(u, sigma))
    }

    /// Checks orthonormality of `U` and the ordering of `Σ`.
    pub fn validate(&self) -> Result<()> {
        let r = self.rank();
        if self.u.ncols() != r || self.v.ncols() != r || self.v.nrows() != self.u.nrows() {
            return Err(Error::Dimension("factor shapes disagree with rank".into()));
        }
        let gram = self.u.transpose() * &self.u - DMatrix::identity(r, r);
        if gram.norm() >= 1e-8 {
            return Err(Error::InvalidDomain(format!("U not orthonormal (‖UᵀU − I‖ = {:.3e})", gram.norm())));
        }
        for w in self.sigma.as_slice().windows(2) {
            if w[1] > w[0] {
                return Err(Error::InvalidDomain("Σ not sorted non-increasing".into()));
            }
        }
        if self.sigma.iter().any(|s| *s < 0.0 || !s.is_finite()) {
            return Err(Error::InvalidDomain("Σ has negative or non-finite entries".into()));
        }
        Ok(())
    }
}
