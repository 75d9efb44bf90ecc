//! Linear algebra kernels: band LU, bordered saddle-point solves and
//! symmetric tridiagonal eigenproblems.

pub mod band;
pub mod bordered;
pub mod tridiag;

pub use band::{BandLu, BandMatrix};
pub use bordered::{
    gram_condition, solver_registry, weighted_dot, BandedBorderedSolver, BorderedProblem,
    BorderedSolution, BorderedSolver, LinearOperator, MinresBorderedSolver,
};
pub use tridiag::SymTridiagonal;
