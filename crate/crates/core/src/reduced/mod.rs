//! Reduced constrained problems on active coordinates, the min-norm pullback
//! to full space, and a full-space baseline solver.

mod full;
mod pullback;
mod solve;

pub use full::{solve_full, FullConfig, FullSolution};
pub use pullback::{coupling, pullback, pullback_with_tol, PullbackResult, DEFAULT_COUPLING_TOL};
pub use solve::{solve_reduced, ReducedConfig, ReducedProblem, ReducedSolution, SolverTraceSummary};
