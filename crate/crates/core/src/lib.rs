//! Stagewise accelerated stochastic solvers for sparse nonconvex regularized
//! empirical risk minimization, plus proxSVRG baselines and a benchmark
//! harness that runs them under equal stochastic-gradient budgets.
//!
//! The library is organized around a composite finite-sum objective
//!
//! ```text
//! phi(x) = (1/n) sum_i f_i(x) + psi(x)
//! ```
//!
//! where each `f_i` is smooth and weakly convex and `psi` is a scaled L1
//! norm. Nonconvex sparsity penalties (log-sum, transformed L1) enter
//! through a difference-of-convex split: the L1 part goes to `psi`, the
//! smooth concave part is folded into the `f_i`.
//!
//! Modules:
//! - [`data`]: sparse LIBSVM-format datasets and data-dependent constants.
//! - [`problem`]: the composite objective, its gradients and prox operators.
//! - [`katyusha`]: the accelerated variance-reduced inner solver for
//!   strongly convex subproblems.
//! - [`katalyst`]: the stagewise outer loop that convexifies the problem
//!   around the current iterate and calls the inner solver.
//! - [`baselines`]: proxSVRG in its small-step and mini-batch variants.
//! - [`metrics`]: stationarity measures, gradient accounting, run traces.
//! - [`oracle`]: brute-force verification oracles used by the test suites.
//! - [`harness`]: experiment configuration, synthetic data, CSV emission.

// `!(x > 0.0)`-style validation is used on purpose: it rejects NaN along
// with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod data;
pub mod harness;
pub mod katalyst;
pub mod katyusha;
pub mod metrics;
pub mod oracle;
pub mod problem;

pub use data::{max_row_norm_sq, parse_libsvm, Dataset, SparseRow};
pub use katalyst::{run_katalyst, KatalystConfig, KatalystRun, StageRecord};
pub use katyusha::{make_params, InnerProblem, KatyushaParams};
pub use metrics::{prox_gradient_norm, GradCounter, Measure, Recorder, SolverTrace, TracePoint};
pub use problem::{
    derive_constants, prox_shifted_l1, CompositeProblem, DenseVector, LossKind, RegKind,
    Regularizer,
};
