//! Small self-contained solvers: dense simplex, 0/1 branch-and-bound and
//! projected-gradient minimization.

mod bnb;
mod lp;
mod pgd;

pub use bnb::{ip_solve_binary, NODE_LIMIT};
pub use lp::{
    is_binary, lp_solve, Constraint, LinearProgram, Relation, Sense, SolveReport, SolveStatus,
    FEASIBILITY_TOL, INTEGRALITY_TOL,
};
pub use pgd::{
    augmented_lagrangian_min, projected_gradient_min, AlmSolution, LinearlyConstrained,
    PgdOptions, PgdSolution,
};
