use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution as _, Normal};

use crate::error::{Error, Result};
use crate::util::rng;

/// Random Fourier features for the Gaussian kernel `exp(−‖x − y‖²/2σ²)`.
///
/// `φ(x) = √(2/D) (cos(ω_ℓᵀx + b_ℓ))_ℓ` with `ω_ℓ ~ N(0, σ⁻² I)` and
/// `b_ℓ ~ U[0, 2π)`. The factor 2 makes `φ(x)ᵀφ(y)` an unbiased estimate of
/// the kernel; with `√(1/D)` the estimate converges to half the kernel.
#[derive(Clone, Debug)]
pub struct RandomFeatureMap {
    omega: DMatrix<f64>,
    phase: DVector<f64>,
    scale: f64,
}

impl RandomFeatureMap {
    pub fn new(input_dim: usize, d_feat: usize, sigma: f64, seed: u64) -> Result<Self> {
        if d_feat == 0 {
            return Err(Error::Config("random feature count must be at least 1".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
        }
        let mut r = rng(seed);
        let normal = Normal::new(0.0, 1.0 / sigma).expect("positive std");
        let omega = DMatrix::from_fn(d_feat, input_dim, |_, _| normal.sample(&mut r));
        let phase = DVector::from_fn(d_feat, |_, _| r.random_range(0.0..std::f64::consts::TAU));
        Ok(Self { omega, phase, scale: (2.0 / d_feat as f64).sqrt() })
    }

    pub fn feature_count(&self) -> usize {
        self.phase.len()
    }

    pub fn map(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.omega.ncols() {
            return Err(Error::Dimension(format!("feature map expects length {}, got {}", self.omega.ncols(), x.len())));
        }
        let proj = &self.omega * x + &self.phase;
        Ok(proj.map(|t| self.scale * t.cos()))
    }
}

/// One-shot feature map; equal seeds give equal frequencies.
pub fn random_feature_map(x: &DVector<f64>, d_feat: usize, sigma: f64, seed: u64) -> Result<DVector<f64>> {
    RandomFeatureMap::new(x.len(), d_feat, sigma, seed)?.map(x)
}
