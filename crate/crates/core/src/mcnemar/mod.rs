//! Robust McNemar test: extremal statistics over admissible assignments.

mod binned;
mod general;

use serde::{Deserialize, Serialize};

pub use binned::{
    binned_extreme, maximized_sd, minimized_sd, robust_mcnemar_binned, truncate_minus, truncate_plus, Truncated,
};
pub use general::{robust_mcnemar_general, MSpec};

use crate::error::{Error, Result};
use crate::ilp::Sense;
use crate::model::{MatchAssignment, PairCounts};
use crate::stats::conservative_pvalue;

/// Denominator of the McNemar statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convention {
    /// `(B - C - 1) / sqrt(B + C)`
    #[serde(rename = "m")]
    SqrtM,
    /// `(B - C - 1) / sqrt(B + C + 1)`
    #[serde(rename = "m1")]
    SqrtMPlus1,
}

impl std::str::FromStr for Convention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" | "sqrt_m" => Ok(Convention::SqrtM),
            "m1" | "sqrt_m_plus_1" => Ok(Convention::SqrtMPlus1),
            _ => Err(Error::Invalid(format!("unknown convention {s:?} (expected m or m1)"))),
        }
    }
}

/// Statistic from a numerator count `te = B - C` and `sd = B + C`.
pub fn chi_from(te: i64, sd: usize, conv: Convention) -> Result<f64> {
    let den = match conv {
        Convention::SqrtM => {
            if sd == 0 {
                return Err(Error::ZeroDenominator("B+C=0 under the sqrt(m) convention"));
            }
            sd as f64
        }
        Convention::SqrtMPlus1 => (sd + 1) as f64,
    };
    Ok((te - 1) as f64 / den.sqrt())
}

pub fn mcnemar_stat(pc: &PairCounts, conv: Convention) -> Result<f64> {
    chi_from(pc.te(), pc.discordant(), conv)
}

/// `min(1, 2 min(Phi(chi_plus), 1 - Phi(chi_minus)))`.
pub fn mcnemar_pvalue(chi_plus: f64, chi_minus: f64) -> f64 {
    conservative_pvalue(chi_plus, chi_minus)
}

/// Per-m record of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MTrace {
    pub m: usize,
    pub feasible: bool,
    pub te_plus: Option<i64>,
    pub te_minus: Option<i64>,
    pub chi_plus: Option<f64>,
    pub chi_minus: Option<f64>,
    pub p_value: Option<f64>,
}

/// Solver evidence for one extreme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub sense: Sense,
    pub m: usize,
    pub objective: f64,
    pub bound: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub chi_plus: f64,
    pub chi_minus: f64,
    pub p_value: f64,
    pub convention: Convention,
    /// Discordant count of each witness.
    pub m_plus: usize,
    pub m_minus: usize,
    pub counts_plus: PairCounts,
    pub counts_minus: PairCounts,
    /// One of possibly many optimal assignments.
    pub witness_plus: MatchAssignment,
    pub witness_minus: MatchAssignment,
    pub trace: Vec<MTrace>,
    pub certificates: Vec<Certificate>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_conventions() {
        let pc = PairCounts { a: 0, b: 5, c: 2, d: 0 };
        assert!((mcnemar_stat(&pc, Convention::SqrtM).unwrap() - 2.0 / 7f64.sqrt()).abs() < 1e-15);
        let zero = PairCounts::default();
        assert_eq!(mcnemar_stat(&zero, Convention::SqrtMPlus1).unwrap(), -1.0);
        assert!(mcnemar_stat(&zero, Convention::SqrtM).is_err());
    }

    #[test]
    fn pvalue_caps() {
        assert_eq!(mcnemar_pvalue(0.0, 0.0), 1.0);
        assert_eq!(mcnemar_pvalue(4.0, -4.0), 1.0);
    }
}
