use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::FactorTriple;
use crate::geometry::{w2_exact, Distribution, GroundMetricGraph};

/// An object the kernel can compare: a compressed operator together with the
/// distribution that induced it, or a plain vector (typically an already
/// flattened operator).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelItem {
    Operator { factors: FactorTriple, distribution: Distribution },
    Vector { values: DVector<f64> },
}

impl KernelItem {
    pub fn vector(values: DVector<f64>) -> Self {
        KernelItem::Vector { values }
    }

    /// Flattened representation used by vector kernels.
    pub fn flattened(&self) -> DVector<f64> {
        match self {
            KernelItem::Operator { factors, .. } => factors.flatten(),
            KernelItem::Vector { values } => values.clone(),
        }
    }

    pub fn factors(&self) -> Option<&FactorTriple> {
        match self {
            KernelItem::Operator { factors, .. } => Some(factors),
            KernelItem::Vector { .. } => None,
        }
    }
}

/// Positive-definite kernel used for kernel PCA.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(−α W2(p_a, p_b)²)` on the items' source distributions.
    WassersteinGaussian { alpha: f64, graph: GroundMetricGraph },
    /// `exp(−‖vec_a − vec_b‖² / 2σ²)` on flattened items.
    FlattenedRbf { sigma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        let bw = match self {
            KernelSpec::WassersteinGaussian { alpha, .. } => *alpha,
            KernelSpec::FlattenedRbf { sigma } => *sigma,
        };
        if bw > 0.0 && bw.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("kernel bandwidth must be positive and finite, got {bw}")))
        }
    }
}

/// Kernel value between two items. Symmetric bit-for-bit.
pub fn kernel_eval(a: &KernelItem, b: &KernelItem, spec: &KernelSpec) -> Result<f64> {
    match spec {
        KernelSpec::WassersteinGaussian { alpha, graph } => {
            let (pa, pb) = match (a, b) {
                (KernelItem::Operator { distribution: pa, .. }, KernelItem::Operator { distribution: pb, .. }) => (pa, pb),
                _ => return Err(Error::Dimension("the Wasserstein kernel needs operator items with distributions".into())),
            };
            if pa == pb {
                return Ok(1.0);
            }
            // order the pair canonically so that κ(a,b) and κ(b,a) run the same solve
            let (x, y) = if canonical_le(pa, pb) { (pa, pb) } else { (pb, pa) };
            let (w, _) = w2_exact(x, y, graph)?;
            Ok((-alpha * w * w).exp())
        }
        KernelSpec::FlattenedRbf { sigma } => {
            let (va, vb) = (a.flattened(), b.flattened());
            if va.len() != vb.len() {
                return Err(Error::Dimension(format!("items of length {} and {}", va.len(), vb.len())));
            }
            let d2: f64 = va.iter().zip(vb.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            Ok((-d2 / (2.0 * sigma * sigma)).exp())
        }
    }
}

fn canonical_le(a: &Distribution, b: &Distribution) -> bool {
    for (x, y) in a.weights().iter().zip(b.weights().iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    true
}

/// Full Gram matrix of a list of items.
pub fn gram_matrix(items: &[KernelItem], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    cross_gram(items, items, spec)
}

/// `K[i, j] = κ(rows_i, cols_j)`.
pub fn cross_gram(rows: &[KernelItem], cols: &[KernelItem], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    let mut k = DMatrix::zeros(rows.len(), cols.len());
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in cols.iter().enumerate() {
            k[(i, j)] = kernel_eval(a, b, spec)?;
        }
    }
    Ok(k)
}
