//! 0-1 matching programs: LP-based branch-and-bound and an enumeration oracle.

mod bnb;
mod oracle;
mod program;
mod simplex;

pub use bnb::{solve, Solution, SolveOptions, Status};
pub use oracle::{enumerate_oracle, for_each_feasible, ORACLE_MAX_SIDE};
pub use program::{build_matching_program, Cmp, ExtraConstraint, LinConstraint, MatchingProgram, ObjectiveSpec, Sense};
pub(crate) use program::{fitness_coef, pair_caliper_excess};
