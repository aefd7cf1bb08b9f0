use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::{CovValue, Dataset};
use super::strata::BinningSpec;
use crate::error::{invalid, Result};

/// Pair admissibility rule based on covariate distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Caliper {
    /// `sum_p w_p |x_ip - x_jp| <= threshold` over numeric covariates; every
    /// categorical covariate named in `weights` must match exactly. Empty
    /// `weights` means weight 1 on all numeric covariates and exact match on all
    /// categorical ones.
    WeightedL1 {
        #[serde(default)]
        weights: BTreeMap<String, f64>,
        threshold: f64,
    },
    /// Per-covariate bounds `|x_ip - x_jp| <= tol_p`; categorical covariates
    /// listed here must match exactly (the tolerance is ignored).
    PerCovariate { max_abs_diff: BTreeMap<String, f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Cardinality {
    /// Exactly this many pairs.
    FixedM(usize),
    /// Exactly this many discordant pairs (binary outcomes).
    FixedDiscordant(usize),
    /// As many pairs as the other constraints allow.
    MaxFeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitnessCoefficients {
    /// `-dist_ij` with the weighted L1 distance (weights default to 1 on every
    /// numeric covariate).
    NegDistance {
        #[serde(default)]
        weights: BTreeMap<String, f64>,
    },
    /// 1 per pair.
    MatchCount,
    /// Explicit `[i, j, c_ij]` triples; missing pairs get 0.
    Pairs { pairs: Vec<(usize, usize, f64)> },
}

/// Fitness floor `Fitness(a) >= Maxfit - epsilon`, where `Maxfit` is the best
/// fitness over assignments meeting every other constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    pub coefficients: FitnessCoefficients,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caliper: Option<Caliper>,
    /// Covariate name to tolerance on the difference of matched means.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub balance: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<Cardinality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitness: Option<Fitness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binning: Option<BinningSpec>,
    /// Every treated unit must be matched.
    #[serde(default)]
    pub satt: bool,
    /// Every stratum of `binning` must contribute `min(N_l^t, N_l^c)` pairs.
    #[serde(default)]
    pub full_strata: bool,
}

impl ConstraintSet {
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        let need_cov = |name: &str| -> Result<()> {
            if ds.covariate_position(name).is_none() {
                return invalid(format!("unknown covariate {name:?}"));
            }
            Ok(())
        };
        match &self.caliper {
            Some(Caliper::WeightedL1 { weights, threshold }) => {
                if !(*threshold >= 0.0) {
                    return invalid("caliper threshold must be nonnegative");
                }
                for (k, w) in weights {
                    need_cov(k)?;
                    if !(*w >= 0.0) {
                        return invalid(format!("caliper weight for {k:?} must be nonnegative"));
                    }
                }
            }
            Some(Caliper::PerCovariate { max_abs_diff }) => {
                for (k, t) in max_abs_diff {
                    need_cov(k)?;
                    if !(*t >= 0.0) {
                        return invalid(format!("caliper tolerance for {k:?} must be nonnegative"));
                    }
                }
            }
            None => {}
        }
        for (k, e) in &self.balance {
            need_cov(k)?;
            let p = ds.covariate_position(k).unwrap();
            if ds.units.iter().any(|u| u.covariates[p].as_num().is_none()) {
                return invalid(format!("balance covariate {k:?} is not numeric"));
            }
            if !(*e >= 0.0) {
                return invalid(format!("balance tolerance for {k:?} must be nonnegative"));
            }
        }
        if let Some(f) = &self.fitness {
            if !(f.epsilon >= 0.0) {
                return invalid("fitness epsilon must be nonnegative");
            }
            if let FitnessCoefficients::NegDistance { weights } = &f.coefficients {
                for k in weights.keys() {
                    need_cov(k)?;
                }
            }
        }
        if let Some(b) = &self.binning {
            b.validate(ds)?;
        }
        if self.full_strata && self.binning.is_none() {
            return invalid("full_strata requires a binning spec");
        }
        Ok(())
    }

    /// Whether the pair passes the caliper (true when there is no caliper).
    pub fn caliper_ok(&self, ds: &Dataset, i: usize, j: usize) -> bool {
        match &self.caliper {
            None => true,
            Some(c) => caliper_excess(c, ds, i, j) <= 0.0,
        }
    }
}

/// Amount by which a pair exceeds the caliper; `<= 0` means admissible and
/// `+inf` a categorical mismatch.
pub fn caliper_excess(c: &Caliper, ds: &Dataset, i: usize, j: usize) -> f64 {
    let (t, k) = (ds.treated_unit(i), ds.control_unit(j));
    match c {
        Caliper::WeightedL1 { weights, threshold } => {
            let d = weighted_l1(ds, weights, &t.covariates, &k.covariates);
            d - threshold
        }
        Caliper::PerCovariate { max_abs_diff } => {
            let mut worst = f64::NEG_INFINITY;
            for (name, tol) in max_abs_diff {
                let p = ds.covariate_position(name).expect("validated covariate");
                let e = match (&t.covariates[p], &k.covariates[p]) {
                    (CovValue::Num(a), CovValue::Num(b)) => (a - b).abs() - tol,
                    (a, b) if a == b => f64::NEG_INFINITY,
                    _ => f64::INFINITY,
                };
                worst = worst.max(e);
            }
            if worst == f64::NEG_INFINITY { 0.0 } else { worst }
        }
    }
}

/// Weighted L1 distance; `+inf` when a required categorical differs.
pub fn weighted_l1(ds: &Dataset, weights: &BTreeMap<String, f64>, x: &[CovValue], y: &[CovValue]) -> f64 {
    let mut d = 0.0;
    for (p, name) in ds.covariate_names.iter().enumerate() {
        let w = if weights.is_empty() { Some(1.0) } else { weights.get(name).copied() };
        let Some(w) = w else { continue };
        match (&x[p], &y[p]) {
            (CovValue::Num(a), CovValue::Num(b)) => d += w * (a - b).abs(),
            (a, b) if a == b => {}
            _ => return f64::INFINITY,
        }
    }
    d
}
