use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::{CovValue, Dataset};
use crate::error::{invalid, Error, Result};

/// One coarsening rule; the stratum of a unit is the tuple of its rule labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BinRule {
    /// One bin per distinct value.
    Exact { covariate: String },
    /// Bins `(-inf, c_0), [c_0, c_1), ..., [c_k, inf)`; cuts strictly increasing.
    Intervals { covariate: String, cuts: Vec<f64> },
    /// Categorical values grouped; values outside every group keep their own bin.
    Groups { covariate: String, groups: Vec<Vec<String>> },
}

impl BinRule {
    fn covariate(&self) -> &str {
        match self {
            BinRule::Exact { covariate } | BinRule::Intervals { covariate, .. } | BinRule::Groups { covariate, .. } => {
                covariate
            }
        }
    }

    fn label(&self, v: &CovValue) -> String {
        match (self, v) {
            (BinRule::Exact { .. }, CovValue::Num(x)) => format!("{x}"),
            (BinRule::Exact { .. }, CovValue::Cat(s)) => s.clone(),
            (BinRule::Intervals { cuts, .. }, CovValue::Num(x)) => {
                format!("bin{}", cuts.iter().take_while(|c| **c <= *x).count())
            }
            (BinRule::Intervals { .. }, CovValue::Cat(s)) => s.clone(),
            (BinRule::Groups { groups, .. }, v) => {
                let s = match v {
                    CovValue::Num(x) => format!("{x}"),
                    CovValue::Cat(s) => s.clone(),
                };
                match groups.iter().position(|g| g.contains(&s)) {
                    Some(k) => format!("group{k}"),
                    None => s,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub rules: Vec<BinRule>,
}

impl BinningSpec {
    pub fn exact(covariate: &str) -> Self {
        BinningSpec { rules: vec![BinRule::Exact { covariate: covariate.into() }] }
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if self.rules.is_empty() {
            return invalid("binning spec has no rules");
        }
        for r in &self.rules {
            if ds.covariate_position(r.covariate()).is_none() {
                return invalid(format!("unknown covariate {:?}", r.covariate()));
            }
            if let BinRule::Intervals { cuts, .. } = r {
                if cuts.windows(2).any(|w| !(w[0] < w[1])) || cuts.iter().any(|c| !c.is_finite()) {
                    return invalid(format!("interval cut-points for {:?} are not strictly increasing", r.covariate()));
                }
            }
        }
        Ok(())
    }

    pub fn key(&self, ds: &Dataset, covariates: &[CovValue]) -> Vec<String> {
        self.rules
            .iter()
            .map(|r| r.label(&covariates[ds.covariate_position(r.covariate()).expect("validated")]))
            .collect()
    }
}

/// Outcome-1/outcome-0 counts on each side of a stratum:
/// `u` treated-1, `v` treated-0, `eta` control-1, `nu` control-0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct StratumCounts {
    pub u: usize,
    pub v: usize,
    pub eta: usize,
    pub nu: usize,
}

impl StratumCounts {
    pub fn new(u: usize, v: usize, eta: usize, nu: usize) -> Self {
        StratumCounts { u, v, eta, nu }
    }
    pub fn nt(&self) -> usize {
        self.u + self.v
    }
    pub fn nc(&self) -> usize {
        self.eta + self.nu
    }
    pub fn m(&self) -> usize {
        self.nt().min(self.nc())
    }
    pub fn n(&self) -> usize {
        self.nt() + self.nc()
    }
    /// Units with outcome 1 (sharp-null bookkeeping).
    pub fn n1(&self) -> usize {
        self.u + self.eta
    }
    pub fn n0(&self) -> usize {
        self.v + self.nu
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub key: Vec<String>,
    /// Treated indices (rank among treated units), ascending.
    pub treated: Vec<usize>,
    /// Control indices, ascending.
    pub control: Vec<usize>,
    /// Binary datasets only: treated indices split by outcome.
    pub t1: Vec<usize>,
    pub t0: Vec<usize>,
    pub c1: Vec<usize>,
    pub c0: Vec<usize>,
}

impl Stratum {
    pub fn nt(&self) -> usize {
        self.treated.len()
    }
    pub fn nc(&self) -> usize {
        self.control.len()
    }
    pub fn n(&self) -> usize {
        self.nt() + self.nc()
    }
    pub fn m(&self) -> usize {
        self.nt().min(self.nc())
    }
    /// True when the stratum cannot contribute any pair.
    pub fn is_empty_side(&self) -> bool {
        self.m() == 0
    }
    pub fn counts(&self) -> StratumCounts {
        StratumCounts::new(self.t1.len(), self.t0.len(), self.c1.len(), self.c0.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratification {
    pub binary: bool,
    pub n_treated: usize,
    pub n_control: usize,
    pub strata: Vec<Stratum>,
    stratum_of_treated: Vec<usize>,
    stratum_of_control: Vec<usize>,
}

impl Stratification {
    pub fn len(&self) -> usize {
        self.strata.len()
    }
    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }
    pub fn stratum_of_treated(&self, i: usize) -> usize {
        self.stratum_of_treated[i]
    }
    pub fn stratum_of_control(&self, j: usize) -> usize {
        self.stratum_of_control[j]
    }
    pub fn same_stratum(&self, i: usize, j: usize) -> bool {
        self.stratum_of_treated[i] == self.stratum_of_control[j]
    }
    pub fn counts(&self) -> Vec<StratumCounts> {
        self.strata.iter().map(Stratum::counts).collect()
    }

    /// Synthetic binary stratification from counts. Within each stratum the
    /// treated indices are numbered outcome-1 first, and likewise for controls.
    pub fn from_counts(counts: &[StratumCounts]) -> Stratification {
        let mut strata = Vec::with_capacity(counts.len());
        let (mut ti, mut ci) = (0usize, 0usize);
        let (mut sot, mut soc) = (Vec::new(), Vec::new());
        for (l, c) in counts.iter().enumerate() {
            let t1: Vec<usize> = (ti..ti + c.u).collect();
            let t0: Vec<usize> = (ti + c.u..ti + c.nt()).collect();
            let c1: Vec<usize> = (ci..ci + c.eta).collect();
            let c0: Vec<usize> = (ci + c.eta..ci + c.nc()).collect();
            ti += c.nt();
            ci += c.nc();
            sot.extend(std::iter::repeat_n(l, c.nt()));
            soc.extend(std::iter::repeat_n(l, c.nc()));
            strata.push(Stratum {
                key: vec![format!("s{l}")],
                treated: t1.iter().chain(&t0).copied().collect(),
                control: c1.iter().chain(&c0).copied().collect(),
                t1,
                t0,
                c1,
                c0,
            });
        }
        Stratification {
            binary: true,
            n_treated: ti,
            n_control: ci,
            strata,
            stratum_of_treated: sot,
            stratum_of_control: soc,
        }
    }
}

/// Group units by the binning key; strata are ordered by key.
pub fn stratify(ds: &Dataset, spec: &BinningSpec) -> Result<Stratification> {
    spec.validate(ds)?;
    let mut groups: BTreeMap<Vec<String>, Stratum> = BTreeMap::new();
    let binary = ds.is_binary();
    let mut push = |key: Vec<String>, idx: usize, treated: bool, y: f64| {
        let s = groups.entry(key.clone()).or_insert_with(|| Stratum {
            key,
            treated: vec![],
            control: vec![],
            t1: vec![],
            t0: vec![],
            c1: vec![],
            c0: vec![],
        });
        let one = y != 0.0;
        match (treated, one) {
            (true, _) => s.treated.push(idx),
            (false, _) => s.control.push(idx),
        }
        if binary {
            match (treated, one) {
                (true, true) => s.t1.push(idx),
                (true, false) => s.t0.push(idx),
                (false, true) => s.c1.push(idx),
                (false, false) => s.c0.push(idx),
            }
        }
    };
    for i in 0..ds.n_treated() {
        let u = ds.treated_unit(i);
        push(spec.key(ds, &u.covariates), i, true, u.outcome);
    }
    for j in 0..ds.n_control() {
        let u = ds.control_unit(j);
        push(spec.key(ds, &u.covariates), j, false, u.outcome);
    }
    let strata: Vec<Stratum> = groups.into_values().collect();
    let mut sot = vec![usize::MAX; ds.n_treated()];
    let mut soc = vec![usize::MAX; ds.n_control()];
    for (l, s) in strata.iter().enumerate() {
        for &i in &s.treated {
            sot[i] = l;
        }
        for &j in &s.control {
            soc[j] = l;
        }
    }
    if sot.contains(&usize::MAX) || soc.contains(&usize::MAX) {
        return Err(Error::Consistency("stratification does not cover all units".into()));
    }
    for s in &strata {
        if s.is_empty_side() {
            log::debug!("stratum {:?} has an empty side and contributes no pairs", s.key);
        }
    }
    Ok(Stratification {
        binary,
        n_treated: ds.n_treated(),
        n_control: ds.n_control(),
        strata,
        stratum_of_treated: sot,
        stratum_of_control: soc,
    })
}
