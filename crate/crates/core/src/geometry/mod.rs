//! Ground-metric graphs, measure-dependent Laplacians and their
//! pseudoinverses, exact and entropic 2-Wasserstein distances, and the
//! Wasserstein metric tensor with its natural-gradient step.
//!
//! The Laplacian uses the positive-semidefinite convention `L = D − W` with
//! `W_ij = ω_ij (p_i + p_j)`, so `L 1 = 0` and `xᵀ L x ≥ 0`. Transport cost is
//! always the squared ground cost.

mod graph;
mod laplacian;
mod metric;
mod natural;
mod sinkhorn;
mod transport;

pub use graph::{Distribution, GroundMetricGraph};
pub use laplacian::{build_laplacian, pinv_dense, pinv_lowrank, LowRankPinv, MeasureLaplacian};
pub use metric::{
    jacobian_fd, metric_tensor, natural_direction, natural_gradient_step, softmax_jacobian, MetricTensor, PinvOperator,
    DEFAULT_DAMPING,
};
pub use natural::{
    natural_gradient_descent, w2_squared_gradient, ExactPinv, LoopRecord, NaturalGradientConfig, PinvSource, RewardFn,
    TruncatedPinv,
};
pub use sinkhorn::{w2_sinkhorn, SinkhornResult, SINKHORN_DEFAULT_MAX_ITER, SINKHORN_DEFAULT_TOL};
pub use transport::{
    solve_transport, w2_exact, w2_exact_with_potentials, write_distance_csv, TransportPlan, TransportSolution,
    EXACT_MAX_SUPPORT,
};
