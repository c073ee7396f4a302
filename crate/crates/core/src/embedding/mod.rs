//! Compressed representations of inverse-Laplacian operators.
//!
//! Items are either factorized operators paired with the distribution that
//! produced them, or plain vectors. A [`KernelSpec`] compares items, either
//! through a Gaussian of the Wasserstein distance between their
//! distributions or through an RBF on flattened operators. [`nystrom_fit`]
//! builds a kernel-PCA basis from a uniformly sampled landmark subset and
//! [`EmbeddingBasis::project`] embeds new items. [`incremental_update`]
//! streams in new landmarks, and [`decode_to_operator`] maps an embedding
//! back to a low-rank operator through the landmark codebook.
//!
//! [`RandomFeatureMap`] gives an explicit finite-dimensional approximation
//! of the flattened RBF kernel.

mod decode;
mod kernel;
mod nystrom;
mod random_features;

pub use decode::{decode_to_operator, load_basis, save_basis, Codebook};
pub use kernel::{cross_gram, gram_matrix, kernel_eval, KernelItem, KernelSpec};
pub use nystrom::{incremental_update, nystrom_fit, EmbeddingBasis, ADMISSION_TOL, EIGEN_REL_TOL};
pub use random_features::{random_feature_map, RandomFeatureMap};
