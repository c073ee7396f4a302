//! Two-block hypervectors with a sign-valued binding algebra.
//!
//! A [`Hypervector`] is `[kPCA block | random block]`. The random block
//! carries the compositional algebra: [`bind`] multiplies componentwise,
//! bundling takes a majority vote and [`ConceptDictionary::permute`]
//! reindexes by a per-slot permutation. The kPCA block keeps the linear
//! geometry of an embedding: binding and permutation leave it alone and
//! bundling averages it.
//!
//! [`ConceptDictionary`] owns the named signatures for roles, fillers,
//! entities and core-ontology concepts, and [`aggregator_search`] answers
//! a bundled query against a memory of encoded facts by searching over
//! partial unbindings.

mod aggregator;
mod algebra;
mod dictionary;

pub use aggregator::{aggregator_search, SearchConfig, SearchHit, UnbindStep};
pub use algebra::{bind, bundle_with_tiebreak, sign_dot, similarity, unbind, Hypervector, SimilarityMode};
pub use dictionary::{ConceptDictionary, ConceptKind, DEFAULT_ELL, DEFAULT_R};
