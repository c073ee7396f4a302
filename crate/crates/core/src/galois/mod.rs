//! Expand/shrink fixpoint search over hybrid states.
//!
//! A [`CandidateState`] pairs a symbol string with a real vector; a
//! [`StateMap`] turns it into a distribution on a ground-metric graph, and
//! states are ordered by W2 distance of that distribution to a target.
//! [`expand`] is extensive (inputs are always kept) and [`shrink`] keeps the
//! `keep` minimal candidates, so the best distance seen by
//! [`iterate_to_fixpoint`] can only go down. [`dp_oracle`] enumerates small
//! finite spaces exhaustively for comparison.
//!
//! Expansion runs frontier states in parallel; the merge is a sorted,
//! deduplicated map keyed by state, so results do not depend on the number
//! of worker threads.

mod oracle;
mod scenario;
mod search;
mod state;

pub use oracle::{dp_oracle, FiniteSpace, MAX_ORACLE_STATES, MAX_ORACLE_SYMBOLS};
pub use scenario::{chain_family, GraphSpec, MapSpec, OracleSpec, Scenario, ScenarioRun, StateSpec, TargetSpec, DEFAULT_EPSILON};
pub use search::{expand, iterate_to_fixpoint, shrink, write_trace, write_trace_csv, ExpansionRules, FixpointConfig, FixpointResult, Problem, TraceRow};
pub use state::{
    hybrid_distance, hybrid_graph, partial_order_cmp, AnchorMap, CandidateState, GaussianChainMap, HybridMetricSpec, OrderCmp, StateMap,
    TrigramReadoutMap,
};
