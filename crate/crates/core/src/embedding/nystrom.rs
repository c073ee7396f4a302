use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::kernel::{cross_gram, gram_matrix, kernel_eval, KernelItem, KernelSpec};
use crate::error::{Error, Result};
use crate::util::{rng, sym_eigen_desc};

/// Eigenvalues of `K_SS` at or below this fraction of the largest one are
/// treated as zero.
pub const EIGEN_REL_TOL: f64 = 1e-10;

/// A streamed item becomes a landmark only when its kernel residual against
/// the current landmark span exceeds this value.
pub const ADMISSION_TOL: f64 = 1e-8;

/// Fitted Nyström kernel-PCA basis.
///
/// Embeddings are uncentered kernel-PCA scores: a landmark's embedding is
/// `Λ^{1/2} Vᵀ e_i`, and any item projects as `Λ^{−1/2} Vᵀ k(item, S)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBasis {
    pub spec: KernelSpec,
    /// Positions of the landmarks in the fitting set (streamed items continue
    /// the numbering after the fitting set).
    pub landmark_indices: Vec<usize>,
    pub landmarks: Vec<KernelItem>,
    /// All `m` eigenvalues of `K_SS`, non-increasing.
    pub eigvals: DVector<f64>,
    /// Matching eigenvectors as columns (`m × m`).
    pub eigvecs: DMatrix<f64>,
    /// Output dimension.
    pub d: usize,
    /// Number of positive eigenvalues above the numerical cutoff; only these
    /// directions are used for embeddings.
    pub rank: usize,
    /// `K_SS` had eigenvalues at or below the cutoff (numerically singular or
    /// indefinite) and the pseudo-inverse path was taken.
    pub singular: bool,
    /// `‖K − K_RS K_SS⁺ K_SR‖_F` over the fitting set.
    pub gram_error: Option<f64>,
    pub seed: u64,
    pub items_seen: usize,
    /// Upper bound on the landmark count for streaming updates.
    pub cap: Option<usize>,
}

struct Spectrum {
    vals: DVector<f64>,
    vecs: DMatrix<f64>,
    rank: usize,
    cutoff: f64,
}

fn spectrum(kss: &DMatrix<f64>) -> Spectrum {
    let (vals, vecs) = sym_eigen_desc(kss);
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cutoff = EIGEN_REL_TOL * top;
    let rank = vals.iter().filter(|v| **v > cutoff).count();
    Spectrum { vals, vecs, rank, cutoff }
}

/// Pseudo-inverse over every eigenvalue with magnitude above the cutoff.
/// The Wasserstein Gaussian kernel is not positive semidefinite on every
/// graph, so negative eigenvalues can appear and are inverted as well.
fn pinv_from(s: &Spectrum) -> DMatrix<f64> {
    let m = s.vals.len();
    let mut p = DMatrix::zeros(m, m);
    for c in 0..m {
        if s.vals[c].abs() > s.cutoff {
            let v = s.vecs.column(c);
            p += v * v.transpose() / s.vals[c];
        }
    }
    p
}

/// Fits a Nyström basis on `m` landmarks drawn uniformly without replacement.
///
/// Landmarks are the first `m` entries of a seeded permutation, so fits with
/// the same seed and growing `m` use nested landmark sets.
pub fn nystrom_fit(items: &[KernelItem], spec: &KernelSpec, m: usize, d: usize, seed: u64) -> Result<EmbeddingBasis> {
    spec.validate()?;
    let n = items.len();
    if n == 0 {
        return Err(Error::Empty("no items to fit".into()));
    }
    if d == 0 || d > m || m > n {
        return Err(Error::Config(format!("need 1 ≤ d ≤ m ≤ |items|, got d={d}, m={m}, |items|={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(seed));
    let landmark_indices: Vec<usize> = order[..m].to_vec();

    let k = gram_matrix(items, spec)?;
    let k_rs = DMatrix::from_fn(n, m, |i, j| k[(i, landmark_indices[j])]);
    let kss = DMatrix::from_fn(m, m, |i, j| k[(landmark_indices[i], landmark_indices[j])]);
    let s = spectrum(&kss);
    let approx = &k_rs * pinv_from(&s) * k_rs.transpose();
    let gram_error = (&k - approx).norm();

    Ok(EmbeddingBasis {
        spec: spec.clone(),
        landmarks: landmark_indices.iter().map(|&i| items[i].clone()).collect(),
        landmark_indices,
        singular: s.rank < m,
        rank: s.rank,
        eigvals: s.vals,
        eigvecs: s.vecs,
        d,
        gram_error: Some(gram_error),
        seed,
        items_seen: n,
        cap: None,
    })
}

impl EmbeddingBasis {
    pub fn m(&self) -> usize {
        self.landmarks.len()
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = Some(cap);
        self
    }

    fn used_components(&self) -> usize {
        self.d.min(self.rank)
    }

    /// Embedding of each landmark as computed during fitting.
    pub fn training_embeddings(&self) -> Vec<DVector<f64>> {
        let u = self.used_components();
        (0..self.m())
            .map(|i| {
                DVector::from_fn(self.d, |c, _| {
                    if c < u {
                        self.eigvals[c].sqrt() * self.eigvecs[(i, c)]
                    } else {
                        0.0
                    }
                })
            })
            .collect()
    }

    /// Out-of-sample projection `z = Λ^{−1/2} Vᵀ k(item, S)`; components
    /// beyond the numerical rank are zero.
    pub fn project(&self, item: &KernelItem) -> Result<DVector<f64>> {
        let k = DVector::from_iterator(
            self.m(),
            self.landmarks.iter().map(|l| kernel_eval(item, l, &self.spec)).collect::<Result<Vec<_>>>()?,
        );
        let u = self.used_components();
        Ok(DVector::from_fn(self.d, |c, _| {
            if c < u {
                self.eigvecs.column(c).dot(&k) / self.eigvals[c].sqrt()
            } else {
                0.0
            }
        }))
    }

    pub fn project_all(&self, items: &[KernelItem]) -> Result<Vec<DVector<f64>>> {
        items.iter().map(|it| self.project(it)).collect()
    }

    fn refit(&mut self, landmarks: Vec<KernelItem>, indices: Vec<usize>) -> Result<()> {
        let kss = gram_matrix(&landmarks, &self.spec)?;
        let s = spectrum(&kss);
        self.singular = s.rank < landmarks.len();
        self.rank = s.rank;
        self.eigvals = s.vals;
        self.eigvecs = s.vecs;
        self.d = self.d.min(landmarks.len());
        self.landmarks = landmarks;
        self.landmark_indices = indices;
        Ok(())
    }
}

/// Streams new items into the basis.
///
/// Each item is admitted as a landmark only if it adds a direction to the
/// landmark span (its kernel residual exceeds [`ADMISSION_TOL`]), so repeated
/// items leave the basis untouched. When the landmark count exceeds the cap,
/// a pivoted Cholesky pass on `K_SS` keeps the `cap` landmarks that explain
/// the most residual variance, and `K_SS` is re-decomposed.
pub fn incremental_update(basis: &EmbeddingBasis, new_items: &[KernelItem]) -> Result<EmbeddingBasis> {
    let mut out = basis.clone();
    let mut landmarks = basis.landmarks.clone();
    let mut indices = basis.landmark_indices.clone();
    let mut changed = false;
    let mut kss = gram_matrix(&landmarks, &basis.spec)?;
    let mut pinv = pinv_from(&spectrum(&kss));
    for (offset, item) in new_items.iter().enumerate() {
        let k_s = cross_gram(&landmarks, std::slice::from_ref(item), &basis.spec)?.column(0).into_owned();
        let self_k = kernel_eval(item, item, &basis.spec)?;
        let residual = self_k - k_s.dot(&(&pinv * &k_s));
        if residual > ADMISSION_TOL {
            landmarks.push(item.clone());
            indices.push(basis.items_seen + offset);
            let m = landmarks.len();
            let mut grown = DMatrix::zeros(m, m);
            grown.view_mut((0, 0), (m - 1, m - 1)).copy_from(&kss);
            for i in 0..m - 1 {
                grown[(i, m - 1)] = k_s[i];
                grown[(m - 1, i)] = k_s[i];
            }
            grown[(m - 1, m - 1)] = self_k;
            kss = grown;
            pinv = pinv_from(&spectrum(&kss));
            changed = true;
        }
    }
    out.items_seen = basis.items_seen + new_items.len();
    if let Some(cap) = basis.cap {
        if landmarks.len() > cap {
            let mut keep = pivoted_cholesky_order(&kss, cap);
            keep.sort_unstable();
            landmarks = keep.iter().map(|&i| landmarks[i].clone()).collect();
            indices = keep.iter().map(|&i| indices[i]).collect();
            changed = true;
        }
    }
    if changed {
        out.refit(landmarks, indices)?;
        out.gram_error = None;
    }
    Ok(out)
}

/// First `count` pivots of a greedy (largest residual diagonal) Cholesky
/// factorization.
fn pivoted_cholesky_order(k: &DMatrix<f64>, count: usize) -> Vec<usize> {
    let n = k.nrows();
    let mut diag: Vec<f64> = (0..n).map(|i| k[(i, i)]).collect();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut chosen = Vec::new();
    for _ in 0..count.min(n) {
        let p = (0..n)
            .filter(|i| !chosen.contains(i))
            .max_by(|&a, &b| diag[a].total_cmp(&diag[b]).then(b.cmp(&a)))
            .expect("candidates remain");
        let piv = diag[p].max(0.0);
        chosen.push(p);
        if piv <= 0.0 {
            continue;
        }
        let mut col = DVector::from_fn(n, |i, _| k[(i, p)]);
        for c in &cols {
            col -= c * c[p];
        }
        col /= piv.sqrt();
        for i in 0..n {
            diag[i] -= col[i] * col[i];
        }
        cols.push(col);
    }
    chosen
}
