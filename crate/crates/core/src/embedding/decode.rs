use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::nystrom::EmbeddingBasis;
use crate::error::{Error, Result};
use crate::factor::FactorTriple;
use crate::util::softmax;

/// Landmark operators aligned with a basis's landmarks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub operators: Vec<FactorTriple>,
}

impl Codebook {
    /// Collects the factor triples of operator landmarks.
    pub fn from_basis(basis: &EmbeddingBasis) -> Result<Self> {
        let operators = basis
            .landmarks
            .iter()
            .map(|l| l.factors().cloned().ok_or_else(|| Error::Format("landmark is not an operator item".into())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { operators })
    }
}

/// Decodes an embedding to an operator by softmax-weighted averaging of the
/// landmark operators.
///
/// Weights are `softmax(−‖z − z_k‖² / τ)` over the landmark embeddings
/// `z_k`; the weighted sum of dense operators is re-factorized at `rank`.
pub fn decode_to_operator(
    z: &DVector<f64>,
    basis: &EmbeddingBasis,
    codebook: &Codebook,
    temperature: f64,
    rank: usize,
) -> Result<FactorTriple> {
    if codebook.operators.is_empty() {
        return Err(Error::Empty("codebook has no operators".into()));
    }
    if codebook.operators.len() != basis.m() {
        return Err(Error::Dimension(format!(
            "codebook has {} operators for {} landmarks",
            codebook.operators.len(),
            basis.m()
        )));
    }
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    let anchors = basis.training_embeddings();
    let logits = DVector::from_iterator(anchors.len(), anchors.iter().map(|a| -(z - a).norm_squared() / temperature));
    let w = softmax(&logits);
    let n = codebook.operators[0].dim();
    let mut acc = DMatrix::zeros(n, n);
    for (wk, op) in w.iter().zip(&codebook.operators) {
        if op.dim() != n {
            return Err(Error::Dimension("codebook operators have different sizes".into()));
        }
        if *wk > 0.0 {
            acc += op.to_dense() * *wk;
        }
    }
    FactorTriple::from_symmetric(&acc, rank)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisHeader {
    format: String,
    spec: super::KernelSpec,
    landmark_indices: Vec<usize>,
    landmarks: Vec<super::KernelItem>,
    eigvals: Vec<f64>,
    eigvec_rows: usize,
    eigvec_cols: usize,
    d: usize,
    rank: usize,
    singular: bool,
    gram_error: Option<f64>,
    seed: u64,
    items_seen: usize,
    cap: Option<usize>,
}

const BASIS_FORMAT: &str = "actpc-basis-v1";

/// Writes `basis.json` (everything except eigenvectors), `basis.bin`
/// (eigenvectors as row-major little-endian `f64`) and, when given,
/// `codebook.json` into `dir`.
pub fn save_basis(dir: &Path, basis: &EmbeddingBasis, codebook: Option<&Codebook>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let header = BasisHeader {
        format: BASIS_FORMAT.into(),
        spec: basis.spec.clone(),
        landmark_indices: basis.landmark_indices.clone(),
        landmarks: basis.landmarks.clone(),
        eigvals: basis.eigvals.as_slice().to_vec(),
        eigvec_rows: basis.eigvecs.nrows(),
        eigvec_cols: basis.eigvecs.ncols(),
        d: basis.d,
        rank: basis.rank,
        singular: basis.singular,
        gram_error: basis.gram_error,
        seed: basis.seed,
        items_seen: basis.items_seen,
        cap: basis.cap,
    };
    std::fs::write(dir.join("basis.json"), serde_json::to_vec_pretty(&header)?)?;
    let v = &basis.eigvecs;
    let mut bytes = Vec::with_capacity(v.len() * 8);
    for i in 0..v.nrows() {
        for j in 0..v.ncols() {
            bytes.extend_from_slice(&v[(i, j)].to_le_bytes());
        }
    }
    std::fs::write(dir.join("basis.bin"), bytes)?;
    if let Some(cb) = codebook {
        std::fs::write(dir.join("codebook.json"), serde_json::to_vec(cb)?)?;
    }
    Ok(())
}

/// Reads what [`save_basis`] wrote; the codebook is `None` when absent.
pub fn load_basis(dir: &Path) -> Result<(EmbeddingBasis, Option<Codebook>)> {
    let header: BasisHeader = serde_json::from_slice(&std::fs::read(dir.join("basis.json"))?)?;
    if header.format != BASIS_FORMAT {
        return Err(Error::Format(format!("unknown basis format {:?}", header.format)));
    }
    let bytes = std::fs::read(dir.join("basis.bin"))?;
    let (r, c) = (header.eigvec_rows, header.eigvec_cols);
    if bytes.len() != r * c * 8 {
        return Err(Error::Format(format!("basis.bin has {} bytes, expected {}", bytes.len(), r * c * 8)));
    }
    let eigvecs = DMatrix::from_row_iterator(
        r,
        c,
        bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))),
    );
    let codebook_path = dir.join("codebook.json");
    let codebook = if codebook_path.exists() {
        Some(serde_json::from_slice(&std::fs::read(codebook_path)?)?)
    } else {
        None
    };
    let basis = EmbeddingBasis {
        spec: header.spec,
        landmark_indices: header.landmark_indices,
        landmarks: header.landmarks,
        eigvals: DVector::from_vec(header.eigvals),
        eigvecs,
        d: header.d,
        rank: header.rank,
        singular: header.singular,
        gram_error: header.gram_error,
        seed: header.seed,
        items_seen: header.items_seen,
        cap: header.cap,
    };
    Ok((basis, codebook))
}
