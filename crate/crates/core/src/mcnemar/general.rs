use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{chi_from, mcnemar_pvalue, Certificate, Convention, MTrace, McNemarResult};
use crate::error::{Error, Result};
use crate::ilp::{self, ExtraConstraint, MatchingProgram, ObjectiveSpec, Sense, SolveOptions, Status};
use crate::model::{pair_counts, ConstraintSet, Dataset, MatchAssignment};

/// Discordant count to test at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MSpec {
    Fixed(usize),
    /// Every feasible m; the largest one is reported.
    Sweep,
}

impl std::str::FromStr for MSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "sweep" {
            return Ok(MSpec::Sweep);
        }
        s.parse().map(MSpec::Fixed).map_err(|_| Error::Invalid(format!("--m expects an integer or 'sweep', got {s:?}")))
    }
}

struct Extreme {
    assignment: MatchAssignment,
    te: i64,
    cert: Certificate,
}

fn solve_extreme(base: &MatchingProgram, ds: &Dataset, m: usize, sense: Sense, opts: &SolveOptions) -> Result<Option<Extreme>> {
    let mut p = base.clone();
    p.add_extra(ds, &ExtraConstraint::Discordant(m))?;
    p.sense = sense;
    let s = ilp::solve(&p, opts)?;
    match s.status {
        Status::Infeasible => Ok(None),
        Status::BudgetExceeded => Err(Error::BudgetExceeded {
            nodes: s.nodes,
            incumbent: s.objective,
            bound: s.bound.unwrap_or(f64::NAN),
        }),
        Status::Optimal => {
            let obj = s.objective.unwrap();
            Ok(Some(Extreme {
                assignment: s.assignment.unwrap(),
                te: obj.round() as i64,
                cert: Certificate { sense, m, objective: obj, bound: s.bound.unwrap(), nodes: s.nodes },
            }))
        }
    }
}

type MOutcome = Option<(Extreme, Extreme)>;

fn at_m(base: &MatchingProgram, ds: &Dataset, m: usize, opts: &SolveOptions) -> Result<MOutcome> {
    let Some(hi) = solve_extreme(base, ds, m, Sense::Max, opts)? else { return Ok(None) };
    let lo = solve_extreme(base, ds, m, Sense::Min, opts)?
        .ok_or_else(|| Error::Consistency(format!("m={m} feasible for the maximum but not the minimum")))?;
    Ok(Some((hi, lo)))
}

/// Extremal McNemar statistics over every assignment admitted by `cs` with
/// `B + C = m`, for one m or for the whole feasible range.
pub fn robust_mcnemar_general(
    ds: &Dataset,
    cs: &ConstraintSet,
    m: MSpec,
    conv: Convention,
    opts: &SolveOptions,
) -> Result<McNemarResult> {
    if !ds.is_binary() {
        return Err(Error::OutcomeKind("binary"));
    }
    if cs.satt && ds.n_treated() > ds.n_control() {
        return Err(Error::Invalid(format!(
            "SATT mode needs N^t <= N^c (N^t={}, N^c={})",
            ds.n_treated(),
            ds.n_control()
        )));
    }
    let base = ilp::build_matching_program(ds, cs, &ObjectiveSpec::DiscordantDiff, Sense::Max, &[], opts)?;
    let ms: Vec<usize> = match m {
        MSpec::Fixed(m) => {
            if m == 0 && conv == Convention::SqrtM {
                return Err(Error::ZeroDenominator("B+C=0 under the sqrt(m) convention"));
            }
            vec![m]
        }
        MSpec::Sweep => {
            // Largest attainable discordant count bounds the scan.
            let mut q = base.clone();
            q.set_objective(|i, j| {
                let (t, c) = (ds.yt(i), ds.yc(j));
                t + c - 2.0 * t * c
            });
            let s = ilp::solve(&q, opts)?;
            match s.status {
                Status::Optimal => (1..=s.objective.unwrap().round() as usize).collect(),
                Status::Infeasible => Vec::new(),
                Status::BudgetExceeded => {
                    return Err(Error::BudgetExceeded { nodes: s.nodes, incumbent: s.objective, bound: s.bound.unwrap_or(f64::NAN) })
                }
            }
        }
    };
    let outcomes: Vec<Result<MOutcome>> = ms.par_iter().map(|&m| at_m(&base, ds, m, opts)).collect();
    let mut trace = Vec::with_capacity(ms.len());
    let mut best: Option<(usize, Extreme, Extreme)> = None;
    for (&m, out) in ms.iter().zip(outcomes) {
        match out? {
            None => trace.push(MTrace { m, feasible: false, te_plus: None, te_minus: None, chi_plus: None, chi_minus: None, p_value: None }),
            Some((hi, lo)) => {
                let (cp, cm) = (chi_from(hi.te, m, conv)?, chi_from(lo.te, m, conv)?);
                trace.push(MTrace {
                    m,
                    feasible: true,
                    te_plus: Some(hi.te),
                    te_minus: Some(lo.te),
                    chi_plus: Some(cp),
                    chi_minus: Some(cm),
                    p_value: Some(mcnemar_pvalue(cp, cm)),
                });
                best = Some((m, hi, lo));
            }
        }
    }
    let Some((m, hi, lo)) = best else {
        return Err(Error::Infeasible(match m {
            MSpec::Fixed(m) => format!("no admissible assignment with B+C={m}"),
            MSpec::Sweep => "no feasible m >= 1".into(),
        }));
    };
    let chi_plus = chi_from(hi.te, m, conv)?;
    let chi_minus = chi_from(lo.te, m, conv)?;
    Ok(McNemarResult {
        chi_plus,
        chi_minus,
        p_value: mcnemar_pvalue(chi_plus, chi_minus),
        convention: conv,
        m_plus: m,
        m_minus: m,
        counts_plus: pair_counts(ds, &hi.assignment)?,
        counts_minus: pair_counts(ds, &lo.assignment)?,
        witness_plus: hi.assignment,
        witness_minus: lo.assignment,
        trace,
        certificates: vec![hi.cert, lo.cert],
    })
}
