use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Activation applied to a layer's prediction.
///
/// `Sigmoid` and `Softmax` serve as output heads (membership degrees and
/// probability vectors respectively); hidden layers normally use `Identity`
/// or `Tanh`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Identity,
    Tanh,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub fn apply(&self, a: &DVector<f64>) -> DVector<f64> {
        match self {
            Activation::Identity => a.clone(),
            Activation::Tanh => a.map(f64::tanh),
            Activation::Sigmoid => a.map(|x| 1.0 / (1.0 + (-x).exp())),
            Activation::Softmax => crate::util::softmax(a),
        }
    }

    /// Vector-Jacobian product `(∂f/∂a)ᵀ upstream`, expressed through the
    /// activation output `out = f(a)`.
    pub fn backprop(&self, out: &DVector<f64>, upstream: &DVector<f64>) -> DVector<f64> {
        match self {
            Activation::Identity => upstream.clone(),
            Activation::Tanh => upstream.zip_map(out, |u, s| u * (1.0 - s * s)),
            Activation::Sigmoid => upstream.zip_map(out, |u, s| u * s * (1.0 - s)),
            Activation::Softmax => {
                let inner = out.dot(upstream);
                upstream.zip_map(out, |u, s| s * (u - inner))
            }
        }
    }
}
