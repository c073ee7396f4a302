use nalgebra::DVector;

use crate::error::{Error, Result};

/// Anything that maps its own input representation to an embedding.
pub trait EmbeddingPredictor {
    fn output_dim(&self) -> usize;
    fn predict(&self, input: &DVector<f64>) -> Result<DVector<f64>>;
}

/// Convex combination of member predictions; member `i` receives `inputs[i]`.
pub fn ensemble_predict(members: &[&dyn EmbeddingPredictor], inputs: &[DVector<f64>], weights: &[f64]) -> Result<DVector<f64>> {
    if members.is_empty() {
        return Err(Error::Empty("ensemble has no members".into()));
    }
    if members.len() != inputs.len() || members.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} members, {} inputs, {} weights",
            members.len(),
            inputs.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config("ensemble weights must be non-negative and sum to 1".into()));
    }
    let d = members[0].output_dim();
    let mut out = DVector::zeros(d);
    for ((m, x), w) in members.iter().zip(inputs).zip(weights) {
        if m.output_dim() != d {
            return Err(Error::Dimension(format!("member output {} differs from {d}", m.output_dim())));
        }
        if *w == 0.0 {
            continue;
        }
        let y = m.predict(x)?;
        if y.len() != d {
            return Err(Error::Dimension(format!("member produced {} values, expected {d}", y.len())));
        }
        out += y * *w;
    }
    Ok(out)
}
