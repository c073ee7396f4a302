use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{Distribution, GroundMetricGraph};
use crate::util::sym_eigen_desc;

/// Versioned feature recipe.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRecipe {
    /// Raw moments 1..4 of each of two spectral coordinates (8), entropy (1),
    /// the four largest weights (4), and those weights accumulated into 8
    /// slots binned by the first spectral coordinate (8).
    #[default]
    V1,
}

pub const TOP_K: usize = 4;
pub const SLOTS: usize = 8;
pub const FEATURE_DIM_V1: usize = 2 * 4 + 1 + TOP_K + SLOTS;

impl FeatureRecipe {
    pub fn dim(&self) -> usize {
        match self {
            FeatureRecipe::V1 => FEATURE_DIM_V1,
        }
    }
}

/// Node coordinates from the eigenvectors of the two smallest nonzero
/// eigenvalues of `D − ω`. Each column's sign is chosen so that `Σ v_i³ ≥ 0`,
/// which does not depend on node order.
pub fn spectral_coordinates(g: &GroundMetricGraph) -> DMatrix<f64> {
    let n = g.n();
    let omega = g.omega();
    let mut l = -omega.clone();
    for i in 0..n {
        l[(i, i)] = omega.row(i).sum();
    }
    let (vals, vecs) = sym_eigen_desc(&l);
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut coords = DMatrix::zeros(n, 2);
    let mut taken = 0;
    for c in (0..n).rev() {
        if taken == 2 {
            break;
        }
        if vals[c] > 1e-10 * top {
            let mut v = vecs.column(c).into_owned();
            let skew: f64 = v.iter().map(|x| x * x * x).sum();
            if skew < -1e-12 {
                v.neg_mut();
            }
            coords.set_column(taken, &v);
            taken += 1;
        }
    }
    coords
}

/// Deterministic feature vector of a distribution on `g`.
pub fn extract_features(p: &Distribution, g: &GroundMetricGraph) -> Result<DVector<f64>> {
    extract_features_with(p, g, &spectral_coordinates(g))
}

/// As [`extract_features`] with precomputed coordinates (one row per node).
pub fn extract_features_with(p: &Distribution, g: &GroundMetricGraph, coords: &DMatrix<f64>) -> Result<DVector<f64>> {
    g.check_support(p, "feature source")?;
    let w = p.weights();
    let n = w.len();
    let mut f = Vec::with_capacity(FEATURE_DIM_V1);
    for c in 0..2 {
        for k in 1..=4 {
            f.push((0..n).map(|i| w[i] * coords[(i, c)].powi(k)).sum());
        }
    }
    f.push(p.entropy());

    let fiedler = coords.column(0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(fiedler[b].total_cmp(&fiedler[a])));
    let (lo, hi) = fiedler.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(*x), h.max(*x)));
    let span = (hi - lo).max(1e-12);
    let mut slots = [0.0; SLOTS];
    for k in 0..TOP_K {
        match order.get(k) {
            Some(&i) => {
                f.push(w[i]);
                let bin = (((fiedler[i] - lo) / span) * SLOTS as f64).floor() as usize;
                slots[bin.min(SLOTS - 1)] += w[i];
            }
            None => f.push(0.0),
        }
    }
    f.extend_from_slice(&slots);
    Ok(DVector::from_vec(f))
}
