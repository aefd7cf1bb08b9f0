//! Exact finite-sample law of the extremal McNemar statistics `(chi-, chi+)`
//! when the only constraints are a stratification.
//!
//! Per-stratum truncated counts are pushed through the closed forms of the
//! extremal numerator and denominator counts, the per-stratum tables are
//! convolved, and the aggregate is mapped to statistic values.

mod chi;
mod mc;
mod table;
mod truncated;

use serde::{Deserialize, Serialize};

pub use chi::{range_pmf_to_chi, ChiAtom, ChiKey, RangePmf};
pub use mc::{mc_sample_distribution, tv_distance};
pub use table::{convolve_strata, ConvMethod, Table4, MAX_FFT_CELLS};
pub use truncated::{
    stratum_range_pmf, truncate_counts, truncated_pmf, truncated_pmf_conditional, truncated_pmf_sharp, PairAtom,
    RangeCase, TruncAtom, TruncatedJointPmf, TruncatedPair,
};

use crate::error::{invalid, Result};
use crate::model::{Stratification, StratumCounts};

/// Largest stratum size for which the per-stratum tables are enumerated.
pub const MAX_STRATUM_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Fixed potential outcomes, Bernoulli treatment within strata.
    Sharp,
    /// Fixed group sizes, Bernoulli outcomes within groups.
    Conditional,
}

impl std::str::FromStr for Regime {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sharp" => Ok(Regime::Sharp),
            "conditional" => Ok(Regime::Conditional),
            _ => invalid(format!("unknown regime {s:?} (expected sharp or conditional)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum StratumParams {
    Sharp { n1: usize, n0: usize, e: f64 },
    Conditional { nt: usize, nc: usize, pt: f64, pc: f64 },
}

impl StratumParams {
    pub fn sharp(n1: usize, n0: usize, e: f64) -> Result<Self> {
        let p = StratumParams::Sharp { n1, n0, e };
        p.validate()?;
        Ok(p)
    }

    pub fn conditional(nt: usize, nc: usize, pt: f64, pc: f64) -> Result<Self> {
        let p = StratumParams::Conditional { nt, nc, pt, pc };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let ok = match *self {
            StratumParams::Sharp { e, .. } => unit(e),
            StratumParams::Conditional { pt, pc, .. } => unit(pt) && unit(pc),
        };
        if !ok {
            return invalid(format!("probabilities must lie in [0, 1]: {self:?}"));
        }
        if self.n() > MAX_STRATUM_SIZE {
            return invalid(format!("stratum of {} units exceeds the enumeration bound {MAX_STRATUM_SIZE}", self.n()));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        match self {
            StratumParams::Sharp { .. } => Regime::Sharp,
            StratumParams::Conditional { .. } => Regime::Conditional,
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            StratumParams::Sharp { n1, n0, .. } => n1 + n0,
            StratumParams::Conditional { nt, nc, .. } => nt + nc,
        }
    }

    /// Upper bound on the number of pairs formed in the stratum.
    pub fn max_matches(&self) -> usize {
        match *self {
            StratumParams::Sharp { n1, n0, .. } => (n1 + n0) / 2,
            StratumParams::Conditional { nt, nc, .. } => nt.min(nc),
        }
    }

    /// A sharp stratum whose units are all treated or all control never
    /// forms pairs.
    pub fn is_usable(&self) -> bool {
        match *self {
            StratumParams::Sharp { e, .. } => e > 0.0 && e < 1.0,
            StratumParams::Conditional { .. } => true,
        }
    }
}

/// Plug-in parameters for every stratum of `strat`.
///
/// Sharp: `e = N_t / N` with `N_1 = U + eta`. Conditional: `p_t = U / N_t`,
/// `p_c = eta / N_c`, or the common `(U + eta) / N` when `pooled`.
pub fn estimate_params(strat: &Stratification, regime: Regime, pooled: bool) -> Result<Vec<StratumParams>> {
    if !strat.binary {
        return Err(crate::Error::OutcomeKind("binary"));
    }
    strat.counts().iter().map(|c| estimate_one(c, regime, pooled)).collect()
}

fn estimate_one(c: &StratumCounts, regime: Regime, pooled: bool) -> Result<StratumParams> {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    match regime {
        Regime::Sharp => StratumParams::sharp(c.n1(), c.n0(), ratio(c.nt(), c.n())),
        Regime::Conditional => {
            let (pt, pc) = if pooled {
                let p = ratio(c.n1(), c.n());
                (p, p)
            } else {
                (ratio(c.u, c.nt()), ratio(c.eta, c.nc()))
            };
            StratumParams::conditional(c.nt(), c.nc(), pt, pc)
        }
    }
}

/// Exact joint pmf of `(chi-, chi+)` under the `sqrt(B + C + 1)` convention.
///
/// Strata that can never form pairs are skipped. All strata must share one
/// regime.
pub fn exact_range_pmf(params: &[StratumParams], method: ConvMethod) -> Result<RangePmf> {
    let Some(first) = params.first() else {
        return invalid("no strata");
    };
    if params.iter().any(|p| p.regime() != first.regime()) {
        return invalid("strata mix sharp and conditional parameters");
    }
    let mut used = Vec::new();
    for (l, p) in params.iter().enumerate() {
        p.validate()?;
        if !p.is_usable() {
            log::warn!("stratum {l} has all units on one side; it contributes no pairs");
            continue;
        }
        if p.max_matches() == 0 {
            continue;
        }
        used.push(truncated_pmf(p));
    }
    let agg = aggregate_table(&used, method)?;
    range_pmf_to_chi(agg)
}

/// Aggregate `(TE-, SD-, TE+, SD+)` table: each sign regime is convolved
/// separately and restricted to the aggregate numerators it applies to.
pub fn aggregate_table(strata: &[TruncatedJointPmf], method: ConvMethod) -> Result<Table4> {
    let mut out: Option<Table4> = None;
    for case in [RangeCase::BothBelow, RangeCase::PlusAbove, RangeCase::BothAbove] {
        let tables: Vec<Table4> = strata.iter().map(|t| stratum_range_pmf(t, case)).collect();
        let mut agg = if tables.is_empty() { Table4::delta() } else { convolve_strata(&tables, method)? };
        agg.retain(|te_m, _, te_p, _| case.admits(te_m, te_p));
        match &mut out {
            None => out = Some(agg),
            Some(acc) => acc.add_assign(&agg)?,
        }
    }
    Ok(out.expect("three cases"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimates() {
        let c = StratumCounts::new(1, 2, 3, 4);
        match estimate_one(&c, Regime::Sharp, false).unwrap() {
            StratumParams::Sharp { n1, n0, e } => {
                assert_eq!((n1, n0), (4, 6));
                assert!((e - 0.3).abs() < 1e-15);
            }
            _ => unreachable!(),
        }
        let c = StratumCounts::new(4, 4, 2, 2);
        assert_eq!(
            estimate_one(&c, Regime::Conditional, false).unwrap(),
            StratumParams::Conditional { nt: 8, nc: 4, pt: 0.5, pc: 0.5 }
        );
        assert_eq!(
            estimate_one(&c, Regime::Conditional, true).unwrap(),
            StratumParams::Conditional { nt: 8, nc: 4, pt: 0.5, pc: 0.5 }
        );
        let all_treated = estimate_one(&StratumCounts::new(1, 1, 0, 0), Regime::Sharp, false).unwrap();
        assert!(!all_treated.is_usable());
    }

    #[test]
    fn size_guard() {
        assert!(StratumParams::sharp(40, 30, 0.5).is_err());
        assert!(StratumParams::conditional(2, 2, 1.5, 0.5).is_err());
    }
}
