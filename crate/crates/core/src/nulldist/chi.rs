use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Table4;
use crate::error::{Error, Result};

/// Exact value `sign * sqrt(num / den)` of `(TE - 1) / sqrt(SD + 1)`, with
/// `num / den` in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChiKey {
    pub negative: bool,
    pub num: u64,
    pub den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl ChiKey {
    pub fn new(te: i64, sd: usize) -> Self {
        let n = te - 1;
        let num = (n * n) as u64;
        let den = sd as u64 + 1;
        let g = gcd(num, den).max(1);
        ChiKey { negative: n < 0, num: num / g, den: den / g }
    }

    pub fn value(&self) -> f64 {
        let v = (self.num as f64 / self.den as f64).sqrt();
        if self.negative {
            -v
        } else {
            v
        }
    }
}

impl Ord for ChiKey {
    fn cmp(&self, other: &Self) -> Ordering {
        let mag = (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128));
        match (self.negative, other.negative) {
            (false, false) => mag,
            (true, true) => mag.reverse(),
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
        }
    }
}

impl PartialOrd for ChiKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiAtom {
    /// Value of the minimum.
    pub s: f64,
    /// Value of the maximum.
    pub r: f64,
    pub s_key: ChiKey,
    pub r_key: ChiKey,
    pub mass: f64,
}

/// Joint pmf of `(chi-, chi+)`, sorted by `(s, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangePmf {
    pub atoms: Vec<ChiAtom>,
    /// Underlying `(TE-, SD-, TE+, SD+)` table when computed exactly.
    #[serde(skip)]
    pub aggregate: Option<Table4>,
}

impl RangePmf {
    pub fn from_keys(masses: BTreeMap<(ChiKey, ChiKey), f64>, aggregate: Option<Table4>) -> Self {
        let atoms = masses
            .into_iter()
            .map(|((s_key, r_key), mass)| ChiAtom { s: s_key.value(), r: r_key.value(), s_key, r_key, mass })
            .collect();
        RangePmf { atoms, aggregate }
    }

    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn prob(&self, s: ChiKey, r: ChiKey) -> f64 {
        self.atoms.iter().find(|a| a.s_key == s && a.r_key == r).map_or(0.0, |a| a.mass)
    }

    /// Mass on `s > r`.
    pub fn mass_above_diagonal(&self) -> f64 {
        self.atoms.iter().filter(|a| a.s_key > a.r_key).map(|a| a.mass).sum()
    }

    fn marginal(&self, pick: impl Fn(&ChiAtom) -> ChiKey) -> Vec<(f64, f64)> {
        let mut m: BTreeMap<ChiKey, f64> = BTreeMap::new();
        for a in &self.atoms {
            *m.entry(pick(a)).or_default() += a.mass;
        }
        m.into_iter().map(|(k, v)| (k.value(), v)).collect()
    }

    /// Marginal of the minimum as `(value, mass)`.
    pub fn marginal_minus(&self) -> Vec<(f64, f64)> {
        self.marginal(|a| a.s_key)
    }

    pub fn marginal_plus(&self) -> Vec<(f64, f64)> {
        self.marginal(|a| a.r_key)
    }
}

/// Maps each aggregate cell to `(chi-, chi+)`; fails if more than `1e-9` of
/// the mass lands on `chi- > chi+`.
pub fn range_pmf_to_chi(agg: Table4) -> Result<RangePmf> {
    let mut masses: BTreeMap<(ChiKey, ChiKey), f64> = BTreeMap::new();
    for ((te_m, sd_m, te_p, sd_p), v) in agg.nonzeros() {
        *masses.entry((ChiKey::new(te_m, sd_m), ChiKey::new(te_p, sd_p))).or_default() += v;
    }
    let pmf = RangePmf::from_keys(masses, Some(agg));
    let bad = pmf.mass_above_diagonal();
    if bad > 1e-9 {
        return Err(Error::Consistency(format!("{bad:e} of the mass has chi- > chi+")));
    }
    Ok(pmf)
}
