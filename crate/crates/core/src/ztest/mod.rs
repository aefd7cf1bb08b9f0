//! Robust paired z-test. The ratio objective is handled by a family of linear
//! 0-1 programs: maximize the mean difference with the sum of squared
//! differences capped (or floored) at grid values `b`, and bound the extremal
//! z between neighbouring grid points.

mod grid;

use serde::{Deserialize, Serialize};

pub use grid::{robust_z, robust_z_side, grid_bounds, GridMode, GridPoint, PointSol, VarianceGrid, ZOptions};

use crate::error::{Error, Result};
use crate::ilp::Sense;
use crate::model::{DiffStats, MatchAssignment};
use crate::stats::conservative_pvalue;

/// `d_bar sqrt(M) / sd`.
pub fn z_stat(d: &DiffStats) -> Result<f64> {
    if d.m < 2 || !(d.sd > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    Ok(d.mean * (d.m as f64).sqrt() / d.sd)
}

/// z as a function of `f1 = d_bar` and `f2 = sum d^2` for M pairs; `None`
/// where the implied variance is not positive.
pub fn z_of(f1: f64, f2: f64, m: usize) -> Option<f64> {
    let mf = m as f64;
    let var = f2 / mf - f1 * f1;
    (var > 0.0).then(|| f1 * mf.sqrt() / var.sqrt())
}

pub fn z_pvalue(z_plus: f64, z_minus: f64) -> f64 {
    conservative_pvalue(z_plus, z_minus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub b: f64,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceInterval {
    pub lo: f64,
    pub hi: f64,
    pub ub: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub lb: f64,
    pub ub: f64,
    pub points: Vec<TracePoint>,
    pub intervals: Vec<TraceInterval>,
}

/// One extreme of the robust z-test. Bounds are in the orientation of the
/// extreme itself (for the minimum, `lb <= z_minus <= ub`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZSide {
    pub sense: Sense,
    pub z: f64,
    pub lb: f64,
    pub ub: f64,
    pub witness: MatchAssignment,
    pub mean: f64,
    pub sd: f64,
    pub mode: GridMode,
    pub iterations: usize,
    pub converged: bool,
    pub solves: usize,
    /// Zero-variance assignments excluded by no-good rows.
    pub excluded: usize,
    pub trace: Vec<IterationTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZResult {
    pub m: usize,
    pub z_plus: f64,
    pub z_minus: f64,
    pub p_value: f64,
    pub plus: ZSide,
    pub minus: ZSide,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_examples() {
        let d = DiffStats::from_diffs(&[1.0, 3.0]).unwrap();
        assert!((z_stat(&d).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(z_stat(&DiffStats::from_diffs(&[2.0, 2.0]).unwrap()), Err(Error::DegenerateVariance)));
        assert_eq!(z_stat(&DiffStats::from_diffs(&[-1.0, 1.0]).unwrap()).unwrap(), 0.0);
    }
}
