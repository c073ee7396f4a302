use nalgebra::DVector;
use rand::Rng;

use crate::util::rng;

/// Scripted separable task: states uniform on `[−2, 2]⁴`, scalar outcome
/// `1[x₀ > 0.5] + 1[x₁ < −0.3]`, which depends on two latent thresholds.
/// With 200 samples, full-batch steps at `eta = 0.0015` and the default
/// learner rate fit it well within 500 steps.
pub fn threshold_task(seed: u64, samples: usize) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut r = rng(seed);
    (0..samples)
        .map(|_| {
            let x = DVector::from_fn(4, |_, _| r.random_range(-2.0..2.0));
            let y = f64::from(u8::from(x[0] > 0.5)) + f64::from(u8::from(x[1] < -0.3));
            (x, DVector::from_element(1, y))
        })
        .collect()
}
