//! Predictive-coding networks whose weight updates can follow Wasserstein
//! natural gradients, together with the machinery that makes this tractable:
//! low-rank pseudoinverse embeddings, a learned embedding approximator,
//! two-block hypervectors, a fuzzy concept-lattice learner, and an
//! expand/shrink fixpoint search over hybrid states.
//!
//! Each capability has a runnable example under `examples/`:
//!
//! ```text
//! cargo run --example pc_micro_iterations
//! cargo run --example transport_distances
//! cargo run --example natural_gradient
//! cargo run --example operator_embedding
//! cargo run --example approximator_pipeline
//! cargo run --example hypervector_chinaglia
//! cargo run --example fuzzy_lattice
//! cargo run --example galois_fixpoint
//! cargo run --example property_probes
//! ```

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approximator;
pub mod embedding;
pub mod error;
pub mod factor;
pub mod fuzzy_fca;
pub mod galois;
pub mod geometry;
pub mod harness;
pub mod hypervector;
pub mod pc_net;
pub mod util;

pub use error::{Error, Result};
pub use factor::FactorTriple;
