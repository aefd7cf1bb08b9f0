use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{StratumParams, Table4};
use crate::model::StratumCounts;
use crate::stats::binom_pmf;

/// Stratum counts after trimming both sides to `m = min(N_t, N_c)` units,
/// for the maximizing (`plus`) and minimizing (`minus`) discard rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TruncatedPair {
    pub u_plus: usize,
    pub u_minus: usize,
    pub eta_plus: usize,
    pub eta_minus: usize,
    pub m: usize,
}

impl TruncatedPair {
    pub fn te_plus(&self) -> i64 {
        self.u_plus as i64 - self.eta_plus as i64
    }
    pub fn te_minus(&self) -> i64 {
        self.u_minus as i64 - self.eta_minus as i64
    }
    /// Fewest discordant pairs reachable from the plus-truncated counts.
    pub fn s_plus(&self) -> usize {
        self.te_plus().unsigned_abs() as usize
    }
    pub fn s_minus(&self) -> usize {
        self.te_minus().unsigned_abs() as usize
    }
    /// Most discordant pairs reachable from the plus-truncated counts.
    pub fn r_plus(&self) -> usize {
        self.m - (self.u_plus as i64 + self.eta_plus as i64 - self.m as i64).unsigned_abs() as usize
    }
    pub fn r_minus(&self) -> usize {
        self.m - (self.u_minus as i64 + self.eta_minus as i64 - self.m as i64).unsigned_abs() as usize
    }
}

pub fn truncate_counts(c: &StratumCounts) -> TruncatedPair {
    let (nt, nc) = (c.nt(), c.nc());
    let g_minus = nt.saturating_sub(nc);
    let g_plus = nc.saturating_sub(nt);
    TruncatedPair {
        u_plus: c.u - c.u.saturating_sub(nc),
        u_minus: c.u.saturating_sub(g_minus),
        eta_plus: c.eta.saturating_sub(g_plus),
        eta_minus: c.eta - c.eta.saturating_sub(nt),
        m: nt.min(nc),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncAtom {
    pub counts: TruncatedPair,
    pub prob: f64,
}

/// Joint probability of one side's `(minus, plus)` truncated count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairAtom {
    pub minus: usize,
    pub plus: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedJointPmf {
    pub params: StratumParams,
    /// Distinct truncated tuples, sorted.
    pub atoms: Vec<TruncAtom>,
    /// `(U-, U+)` table; conditional regime only.
    pub treated: Option<Vec<PairAtom>>,
    /// `(eta-, eta+)` table; conditional regime only.
    pub control: Option<Vec<PairAtom>>,
}

impl TruncatedJointPmf {
    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).sum()
    }

    pub fn prob(&self, key: &TruncatedPair) -> f64 {
        self.atoms.binary_search_by(|a| a.counts.cmp(key)).map_or(0.0, |k| self.atoms[k].prob)
    }
}

fn collect(params: StratumParams, draws: impl Iterator<Item = (StratumCounts, f64)>) -> TruncatedJointPmf {
    let mut map: BTreeMap<TruncatedPair, f64> = BTreeMap::new();
    for (c, p) in draws {
        if p > 0.0 {
            *map.entry(truncate_counts(&c)).or_default() += p;
        }
    }
    TruncatedJointPmf {
        params,
        atoms: map.into_iter().map(|(counts, prob)| TruncAtom { counts, prob }).collect(),
        treated: None,
        control: None,
    }
}

fn pair_table(draws: impl Iterator<Item = ((usize, usize), f64)>) -> Vec<PairAtom> {
    let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (k, p) in draws {
        if p > 0.0 {
            *map.entry(k).or_default() += p;
        }
    }
    map.into_iter().map(|((minus, plus), prob)| PairAtom { minus, plus, prob }).collect()
}

/// Sharp regime: `U ~ Bin(N_1, e)` outcome-1 units and `V ~ Bin(N_0, e)`
/// outcome-0 units are treated.
pub fn truncated_pmf_sharp(n1: usize, n0: usize, e: f64) -> TruncatedJointPmf {
    let draws = (0..=n1).flat_map(move |j| {
        (0..=n0).map(move |k| (StratumCounts::new(j, k, n1 - j, n0 - k), binom_pmf(j, n1, e) * binom_pmf(k, n0, e)))
    });
    collect(StratumParams::Sharp { n1, n0, e }, draws)
}

/// Conditional regime: `U ~ Bin(N_t, p_t)` and independently
/// `eta ~ Bin(N_c, p_c)`.
pub fn truncated_pmf_conditional(nt: usize, nc: usize, pt: f64, pc: f64) -> TruncatedJointPmf {
    let draws = (0..=nt).flat_map(move |u| {
        (0..=nc).map(move |h| (StratumCounts::new(u, nt - u, h, nc - h), binom_pmf(u, nt, pt) * binom_pmf(h, nc, pc)))
    });
    let mut out = collect(StratumParams::Conditional { nt, nc, pt, pc }, draws);
    let probe = |u: usize, h: usize| truncate_counts(&StratumCounts::new(u, nt - u, h, nc - h));
    out.treated = Some(pair_table((0..=nt).map(|u| {
        let t = probe(u, 0);
        ((t.u_minus, t.u_plus), binom_pmf(u, nt, pt))
    })));
    out.control = Some(pair_table((0..=nc).map(|h| {
        let t = probe(0, h);
        ((t.eta_minus, t.eta_plus), binom_pmf(h, nc, pc))
    })));
    out
}

pub fn truncated_pmf(p: &StratumParams) -> TruncatedJointPmf {
    match *p {
        StratumParams::Sharp { n1, n0, e } => truncated_pmf_sharp(n1, n0, e),
        StratumParams::Conditional { nt, nc, pt, pc } => truncated_pmf_conditional(nt, nc, pt, pc),
    }
}

/// Sign regime of the aggregate numerators `(TE-, TE+)`; it decides which
/// denominator form each extreme uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeCase {
    /// `TE+ < 1`: the maximum spreads discordant pairs, the minimum packs them.
    BothBelow,
    /// `TE- < 1 <= TE+`: both extremes pack discordant pairs.
    PlusAbove,
    /// `TE- >= 1`: the maximum packs, the minimum spreads.
    BothAbove,
}

impl RangeCase {
    pub fn from_id(id: u8) -> crate::Result<Self> {
        match id {
            1 => Ok(RangeCase::BothBelow),
            2 => Ok(RangeCase::PlusAbove),
            3 => Ok(RangeCase::BothAbove),
            _ => crate::error::invalid(format!("invalid case id {id}")),
        }
    }

    pub fn admits(self, te_minus: i64, te_plus: i64) -> bool {
        match self {
            RangeCase::BothBelow => te_plus < 1 && te_minus < 1,
            RangeCase::PlusAbove => te_plus >= 1 && te_minus < 1,
            RangeCase::BothAbove => te_plus >= 1 && te_minus >= 1,
        }
    }

    /// `(TE-, SD-, TE+, SD+)` of one stratum under this regime.
    pub fn tuple(self, t: &TruncatedPair) -> (i64, usize, i64, usize) {
        match self {
            RangeCase::BothBelow => (t.te_minus(), t.s_minus(), t.te_plus(), t.r_plus()),
            RangeCase::PlusAbove => (t.te_minus(), t.s_minus(), t.te_plus(), t.s_plus()),
            RangeCase::BothAbove => (t.te_minus(), t.r_minus(), t.te_plus(), t.s_plus()),
        }
    }
}

/// Per-stratum `(TE-, SD-, TE+, SD+)` pmf under one sign regime.
pub fn stratum_range_pmf(tp: &TruncatedJointPmf, case: RangeCase) -> Table4 {
    let mut t = Table4::zeros(tp.params.max_matches());
    for a in &tp.atoms {
        let (te_m, sd_m, te_p, sd_p) = case.tuple(&a.counts);
        t.add(te_m, sd_m, te_p, sd_p, a.prob);
    }
    t
}
