//! Learned map from distribution features to operator embeddings.
//!
//! [`extract_features`] summarizes a distribution on a graph; an
//! [`ApproximatorNet`] (a predictive-coding network by default) maps those
//! features to the kernel-PCA embedding of the distribution's inverse
//! Laplacian, and [`ApproximatorNet::predict_and_reconstruct`] decodes the
//! prediction back to an operator. [`recalibrate`] fine-tunes on freshly
//! factorized ground truths, and [`ensemble_predict`] blends several
//! predictors fed with different input representations.
//!
//! [`SyntheticFamily`] is a versioned benchmark task used by tests, the
//! acceptance suite and the bench harness.

mod ensemble;
mod family;
mod features;
mod net;

pub use ensemble::{ensemble_predict, EmbeddingPredictor};
pub use family::{family_gram, mean_baseline_mse, FamilySetup, SyntheticFamily};
pub use features::{extract_features, extract_features_with, spectral_coordinates, FeatureRecipe, FEATURE_DIM_V1, SLOTS, TOP_K};
pub use net::{
    load_dataset, recalibrate, save_dataset, train_approximator, ApproximatorConfig, ApproximatorNet, DecodeParams,
    TrainingMode, TrainingPair,
};
