use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-block hypervector: a real kPCA block of length `ℓ` followed by a
/// ±1 random block of length `R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypervector {
    kpca: DVector<f64>,
    random: Vec<i8>,
}

impl Hypervector {
    pub fn new(kpca: DVector<f64>, random: Vec<i8>) -> Result<Self> {
        if random.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidDomain("random block entries must be ±1".into()));
        }
        if kpca.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidDomain("kPCA block must be finite".into()));
        }
        Ok(Self { kpca, random })
    }

    /// All-+1 random block and zero kPCA block: the neutral element of bind.
    pub fn identity(ell: usize, r: usize) -> Self {
        Self { kpca: DVector::zeros(ell), random: vec![1; r] }
    }

    pub fn kpca_block(&self) -> &DVector<f64> {
        &self.kpca
    }

    pub fn random_block(&self) -> &[i8] {
        &self.random
    }

    pub fn ell(&self) -> usize {
        self.kpca.len()
    }

    pub fn r(&self) -> usize {
        self.random.len()
    }

    /// Negated random block, kPCA block unchanged.
    pub fn flipped(&self) -> Self {
        Self { kpca: self.kpca.clone(), random: self.random.iter().map(|s| -s).collect() }
    }

    fn check_layout(&self, other: &Hypervector) -> Result<()> {
        if self.ell() != other.ell() || self.r() != other.r() {
            return Err(Error::Dimension(format!(
                "layouts ({}, {}) and ({}, {}) differ",
                self.ell(),
                self.r(),
                other.ell(),
                other.r()
            )));
        }
        Ok(())
    }

    pub(crate) fn with_random(&self, random: Vec<i8>) -> Self {
        Self { kpca: self.kpca.clone(), random }
    }
}

/// Integer dot product of two sign blocks.
pub fn sign_dot(a: &[i8], b: &[i8]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (*x as i64) * (*y as i64)).sum()
}

/// Componentwise product of the random blocks; the left operand's kPCA
/// block passes through. Binding is its own inverse on the random block.
pub fn bind(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    a.check_layout(b)?;
    Ok(a.with_random(a.random.iter().zip(&b.random).map(|(x, y)| x * y).collect()))
}

/// Alias of [`bind`] that reads better at call sites that undo a binding.
pub fn unbind(bound: &Hypervector, key: &Hypervector) -> Result<Hypervector> {
    bind(bound, key)
}

/// Majority superposition with an explicit tiebreak sign vector. kPCA
/// blocks are averaged with the same (normalized) weights.
pub fn bundle_with_tiebreak(items: &[&Hypervector], weights: Option<&[f64]>, tiebreak: &[i8]) -> Result<Hypervector> {
    let first = *items.first().ok_or_else(|| Error::Empty("bundle of no hypervectors".into()))?;
    for it in items {
        first.check_layout(it)?;
    }
    if tiebreak.len() != first.r() {
        return Err(Error::Dimension(format!("tiebreak has {} entries, random block {}", tiebreak.len(), first.r())));
    }
    let w: Vec<f64> = match weights {
        Some(w) if w.len() != items.len() => {
            return Err(Error::Dimension(format!("{} weights for {} items", w.len(), items.len())))
        }
        Some(w) if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 => {
            return Err(Error::InvalidDomain("bundle weights must be non-negative with positive sum".into()))
        }
        Some(w) => w.to_vec(),
        None => vec![1.0; items.len()],
    };
    let total: f64 = w.iter().sum();
    let mut kpca = DVector::zeros(first.ell());
    for (it, wi) in items.iter().zip(&w) {
        kpca += &it.kpca * (wi / total);
    }
    let random = (0..first.r())
        .map(|i| {
            let s: f64 = items.iter().zip(&w).map(|(it, wi)| wi * it.random[i] as f64).sum();
            if s > 0.0 {
                1
            } else if s < 0.0 {
                -1
            } else {
                tiebreak[i]
            }
        })
        .collect();
    Ok(Hypervector { kpca, random })
}

/// Similarity measures between hypervectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Cosine of the random blocks (`dot / R`).
    #[default]
    RandomBlockCos,
    /// Cosine over the concatenation of both blocks.
    FullCos,
    /// Euclidean distance over both blocks (smaller is closer).
    L2,
}

pub fn similarity(a: &Hypervector, b: &Hypervector, mode: SimilarityMode) -> Result<f64> {
    a.check_layout(b)?;
    Ok(match mode {
        SimilarityMode::RandomBlockCos => {
            if a.r() == 0 {
                0.0
            } else {
                sign_dot(&a.random, &b.random) as f64 / a.r() as f64
            }
        }
        SimilarityMode::FullCos => {
            let dot = a.kpca.dot(&b.kpca) + sign_dot(&a.random, &b.random) as f64;
            let na = (a.kpca.norm_squared() + a.r() as f64).sqrt();
            let nb = (b.kpca.norm_squared() + b.r() as f64).sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot / (na * nb)
            }
        }
        SimilarityMode::L2 => {
            let k = (&a.kpca - &b.kpca).norm_squared();
            let mismatches = a.random.iter().zip(&b.random).filter(|(x, y)| x != y).count() as f64;
            (k + 4.0 * mismatches).sqrt()
        }
    })
}
