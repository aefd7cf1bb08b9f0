//! Datasets, assignments, constraint sets, stratifications and evaluation of
//! statistics on a fixed assignment.

mod assignment;
mod constraints;
mod dataset;
mod evaluate;
mod feasibility;
mod strata;

pub use assignment::MatchAssignment;
pub use constraints::{caliper_excess, weighted_l1, Caliper, Cardinality, ConstraintSet, Fitness, FitnessCoefficients};
pub use dataset::{validate_dataset, CovValue, Dataset, OutcomeKind, RawOutcome, RawRecord, Unit};
pub use evaluate::{diff_stats, evaluate_assignment, pair_counts, DiffStats, Evaluation, PairCounts};
pub use feasibility::{check_feasible, Violation};
pub use strata::{stratify, BinRule, BinningSpec, Stratification, Stratum, StratumCounts};
