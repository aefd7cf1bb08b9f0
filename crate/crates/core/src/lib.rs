//! Robust matched-pairs hypothesis tests.
//!
//! Given treated and control units and a set of quality constraints on match
//! assignments, the crate computes the extremal McNemar and paired z
//! statistics over every admissible assignment, conservative p-values built
//! from them, and the exact finite-sample joint law of the extremal McNemar
//! statistics when the constraints are pure stratifications.

pub mod error;
pub mod ilp;
pub mod io;
pub mod mcnemar;
pub mod model;
pub mod nulldist;
pub mod sim;
pub mod stats;
pub mod ztest;

pub use error::{Error, Result};
pub use model::{
    check_feasible, evaluate_assignment, stratify, BinningSpec, ConstraintSet, Dataset, DiffStats, MatchAssignment,
    PairCounts, Stratification, StratumCounts,
};
