//! Nested Monte Carlo estimation.
//!
//! Estimates expectations of the form `E_y[f(y, E_z[phi(y, z)])]`, where the
//! inner expectation is itself approximated by Monte Carlo, and measures how
//! such estimators converge and where they are biased.
//!
//! * [`rng`]: splittable, counter-based streams; results depend only on the
//!   root seed, never on thread scheduling.
//! * [`problem`]: the problem abstraction, validation and quadrature oracles.
//! * [`estimators`]: plain, nested, depth-`d` and collapsed estimators.
//! * [`allocation`]: budget policies `T = N * M` and budget grids.
//! * [`models`]: built-in benchmarks with known answers.
//! * [`harness`]: replicated sweeps, bias studies, policy comparisons and
//!   log–log slope fits.

pub mod allocation;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod models;
pub mod problem;
pub mod quadrature;
pub mod rng;
pub mod sum;

pub use allocation::{budget_grid, AllocationPolicy};
pub use error::{Error, Result};
pub use estimators::{collapsed_estimate, inner_estimate, mc_estimate, nmc_estimate, nmc_estimate_depth, Estimate};
pub use harness::{
    compare_policies, fit_loglog_slope, run_bias, run_collapsed_convergence, run_convergence, run_fixed_inner,
    run_fixed_outer, BiasReport, BiasRow, ConvergenceReport, ConvergenceRow, EstimatorKind, FitAxis, PolicyComparison,
    PolicyResult, RepSchedule, SlopeFit,
};
pub use problem::{gamma_quadrature, validate, Dims, InnerKind, NestedProblem, ProblemTree, TreeLevel};
pub use rng::{Generator, RngStream, StreamId};
