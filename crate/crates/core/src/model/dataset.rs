use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A covariate value: numeric or categorical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovValue {
    Num(f64),
    Cat(String),
}

impl CovValue {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            CovValue::Num(x) => Some(*x),
            CovValue::Cat(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Binary,
    Real,
}

/// Outcome as read from a record, before the dataset-wide tag is settled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawOutcome {
    Binary(bool),
    Real(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub id: String,
    pub treated: bool,
    pub outcome: RawOutcome,
    pub covariates: Vec<CovValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: String,
    pub treated: bool,
    /// 0.0 / 1.0 for binary datasets.
    pub outcome: f64,
    pub covariates: Vec<CovValue>,
}

/// Validated collection of units. Treated units are addressed by their rank
/// among treated units (`i`), controls by their rank among controls (`j`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub covariate_names: Vec<String>,
    pub outcome_kind: OutcomeKind,
    pub units: Vec<Unit>,
    treated: Vec<usize>,
    control: Vec<usize>,
}

impl Dataset {
    pub fn n_treated(&self) -> usize {
        self.treated.len()
    }

    pub fn n_control(&self) -> usize {
        self.control.len()
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn treated_unit(&self, i: usize) -> &Unit {
        &self.units[self.treated[i]]
    }

    pub fn control_unit(&self, j: usize) -> &Unit {
        &self.units[self.control[j]]
    }

    /// Position in `units` of the `i`-th treated unit.
    pub fn treated_index(&self, i: usize) -> usize {
        self.treated[i]
    }

    pub fn control_index(&self, j: usize) -> usize {
        self.control[j]
    }

    pub fn yt(&self, i: usize) -> f64 {
        self.treated_unit(i).outcome
    }

    pub fn yc(&self, j: usize) -> f64 {
        self.control_unit(j).outcome
    }

    pub fn is_binary(&self) -> bool {
        self.outcome_kind == OutcomeKind::Binary
    }

    pub fn covariate_position(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    /// Binary dataset without covariates, treated units first.
    pub fn binary(treated: &[u8], control: &[u8]) -> Result<Dataset> {
        let recs = simple_records(
            treated.iter().map(|&y| RawOutcome::Binary(y != 0)),
            control.iter().map(|&y| RawOutcome::Binary(y != 0)),
        );
        validate_dataset(Vec::new(), recs)
    }

    /// Real-outcome dataset without covariates, treated units first.
    pub fn real(treated: &[f64], control: &[f64]) -> Result<Dataset> {
        let recs = simple_records(
            treated.iter().map(|&y| RawOutcome::Real(y)),
            control.iter().map(|&y| RawOutcome::Real(y)),
        );
        validate_dataset(Vec::new(), recs)
    }
}

fn simple_records(
    t: impl Iterator<Item = RawOutcome>,
    c: impl Iterator<Item = RawOutcome>,
) -> Vec<RawRecord> {
    let mut out = Vec::new();
    for (k, y) in t.enumerate() {
        out.push(RawRecord { id: format!("t{k}"), treated: true, outcome: y, covariates: vec![] });
    }
    for (k, y) in c.enumerate() {
        out.push(RawRecord { id: format!("c{k}"), treated: false, outcome: y, covariates: vec![] });
    }
    out
}

pub fn validate_dataset(covariate_names: Vec<String>, records: Vec<RawRecord>) -> Result<Dataset> {
    if records.is_empty() {
        return Err(Error::Invalid("no records".into()));
    }
    let kind = match records[0].outcome {
        RawOutcome::Binary(_) => OutcomeKind::Binary,
        RawOutcome::Real(_) => OutcomeKind::Real,
    };
    let mut seen = HashSet::new();
    let mut units = Vec::with_capacity(records.len());
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for (k, r) in records.into_iter().enumerate() {
        let y = match (kind, r.outcome) {
            (OutcomeKind::Binary, RawOutcome::Binary(b)) => b as u8 as f64,
            (OutcomeKind::Real, RawOutcome::Real(x)) => x,
            _ => return Err(Error::MixedOutcomeTypes),
        };
        if !y.is_finite() {
            return Err(Error::Invalid(format!("unit {:?}: non-finite outcome", r.id)));
        }
        if r.covariates.len() != covariate_names.len() {
            return Err(Error::Invalid(format!(
                "unit {:?}: {} covariates, schema has {}",
                r.id,
                r.covariates.len(),
                covariate_names.len()
            )));
        }
        if !seen.insert(r.id.clone()) {
            return Err(Error::DuplicateId(r.id));
        }
        if r.treated { treated.push(k) } else { control.push(k) }
        units.push(Unit { id: r.id, treated: r.treated, outcome: y, covariates: r.covariates });
    }
    // Column types must agree across units.
    for p in 0..covariate_names.len() {
        let numeric = matches!(units[0].covariates[p], CovValue::Num(_));
        if units.iter().any(|u| matches!(u.covariates[p], CovValue::Num(_)) != numeric) {
            return Err(Error::Invalid(format!(
                "covariate {:?} mixes numeric and categorical values",
                covariate_names[p]
            )));
        }
    }
    if treated.is_empty() {
        return Err(Error::NoTreated);
    }
    if control.is_empty() {
        return Err(Error::NoControl);
    }
    Ok(Dataset { covariate_names, outcome_kind: kind, units, treated, control })
}
