//! Linear-time extremal McNemar statistics under pure stratification.
//!
//! Each stratum is first trimmed to `M_l = min(N_l^t, N_l^c)` units per side
//! using the discard rule for the requested extreme, then its pairs are formed
//! to either minimize or maximize the discordant count, depending on the sign
//! of the aggregate numerator.

use serde::{Deserialize, Serialize};

use super::{chi_from, mcnemar_pvalue, Convention, McNemarResult};
use crate::error::{Error, Result};
use crate::ilp::Sense;
use crate::model::{MatchAssignment, PairCounts, Stratification, StratumCounts};

/// Counts after discarding down to `m` units on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncated {
    pub u: usize,
    pub v: usize,
    pub eta: usize,
    pub nu: usize,
    pub m: usize,
}

impl Truncated {
    pub fn te(&self) -> i64 {
        self.u as i64 - self.eta as i64
    }
}

/// Discard rule for the maximum: drop treated-0 units and control-1 units first.
pub fn truncate_plus(c: &StratumCounts) -> Truncated {
    let (nt, nc) = (c.nt(), c.nc());
    let m = nt.min(nc);
    let g_plus = nc.saturating_sub(nt);
    let u = c.u - c.u.saturating_sub(nc);
    let eta = c.eta.saturating_sub(g_plus);
    Truncated { u, v: m - u, eta, nu: m - eta, m }
}

/// Discard rule for the minimum: drop treated-1 units and control-0 units first.
pub fn truncate_minus(c: &StratumCounts) -> Truncated {
    let (nt, nc) = (c.nt(), c.nc());
    let m = nt.min(nc);
    let g_minus = nt.saturating_sub(nc);
    let u = c.u.saturating_sub(g_minus);
    let eta = c.eta - c.eta.saturating_sub(nt);
    Truncated { u, v: m - u, eta, nu: m - eta, m }
}

/// Pairs as many discordant couples as possible.
pub fn maximized_sd(t: &Truncated) -> PairCounts {
    let b = t.u.min(t.nu);
    let c = t.eta.min(t.v);
    let a = (t.u - b).min(t.eta - c);
    let d = (t.nu - b).min(t.v - c);
    PairCounts { a, b, c, d }
}

/// Pairs as many concordant couples as possible.
pub fn minimized_sd(t: &Truncated) -> PairCounts {
    let a = t.u.min(t.eta);
    let d = t.nu.min(t.v);
    let b = (t.u - a).min(t.nu - d);
    let c = (t.eta - a).min(t.v - d);
    PairCounts { a, b, c, d }
}

/// Per-stratum pair counts of the maximizing (`Max`) or minimizing (`Min`)
/// assignment under the `sqrt(B + C + 1)` convention.
pub fn binned_extreme(counts: &[StratumCounts], sense: Sense) -> Vec<PairCounts> {
    let trunc: Vec<Truncated> = counts
        .iter()
        .map(|c| match sense {
            Sense::Max => truncate_plus(c),
            Sense::Min => truncate_minus(c),
        })
        .collect();
    let te: i64 = trunc.iter().map(Truncated::te).sum();
    let minimize_sd = match sense {
        Sense::Max => te >= 1,
        Sense::Min => te < 1,
    };
    trunc.iter().map(|t| if minimize_sd { minimized_sd(t) } else { maximized_sd(t) }).collect()
}

fn witness(strat: &Stratification, sense: Sense, per: &[PairCounts]) -> Result<MatchAssignment> {
    let mut pairs = Vec::new();
    for (s, pc) in strat.strata.iter().zip(per) {
        let t = match sense {
            Sense::Max => truncate_plus(&s.counts()),
            Sense::Min => truncate_minus(&s.counts()),
        };
        let (t1, t0, c1, c0) = (&s.t1[..t.u], &s.t0[..t.v], &s.c1[..t.eta], &s.c0[..t.nu]);
        if pc.a + pc.b > t1.len() || pc.c + pc.d > t0.len() || pc.a + pc.c > c1.len() || pc.b + pc.d > c0.len() {
            return Err(Error::Consistency(format!("pair counts {pc:?} exceed truncated stratum {t:?}")));
        }
        pairs.extend((0..pc.a).map(|k| (t1[k], c1[k])));
        pairs.extend((0..pc.b).map(|k| (t1[pc.a + k], c0[k])));
        pairs.extend((0..pc.c).map(|k| (t0[k], c1[pc.a + k])));
        pairs.extend((0..pc.d).map(|k| (t0[pc.c + k], c0[pc.b + k])));
    }
    MatchAssignment::new(pairs, strat.n_treated, strat.n_control)
}

/// Extremal McNemar statistics when the admissible set is "full matching
/// within every stratum".
pub fn robust_mcnemar_binned(strat: &Stratification) -> Result<McNemarResult> {
    if !strat.binary {
        return Err(Error::OutcomeKind("binary"));
    }
    if strat.is_empty() {
        return Err(Error::Invalid("empty stratification".into()));
    }
    let counts = strat.counts();
    let plus = binned_extreme(&counts, Sense::Max);
    let minus = binned_extreme(&counts, Sense::Min);
    let total = |v: &[PairCounts]| v.iter().fold(PairCounts::default(), |s, p| s + *p);
    let (cp, cm) = (total(&plus), total(&minus));
    let conv = Convention::SqrtMPlus1;
    let chi_plus = chi_from(cp.te(), cp.discordant(), conv)?;
    let chi_minus = chi_from(cm.te(), cm.discordant(), conv)?;
    Ok(McNemarResult {
        chi_plus,
        chi_minus,
        p_value: mcnemar_pvalue(chi_plus, chi_minus),
        convention: conv,
        m_plus: cp.discordant(),
        m_minus: cm.discordant(),
        counts_plus: cp,
        counts_minus: cm,
        witness_plus: witness(strat, Sense::Max, &plus)?,
        witness_minus: witness(strat, Sense::Min, &minus)?,
        trace: Vec::new(),
        certificates: Vec::new(),
    })
}
