use serde::{Deserialize, Serialize};

use super::{stratify, Cardinality, ConstraintSet, Dataset, MatchAssignment};
use crate::ilp::{self, ObjectiveSpec, Sense, SolveOptions, Status};

/// A violated constraint and the amount by which it is missed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub slack: f64,
    pub detail: String,
}

fn v(constraint: &str, slack: f64, detail: String) -> Violation {
    Violation { constraint: constraint.to_string(), slack, detail }
}

const TOL: f64 = 1e-9;

/// Lists every constraint of `cs` that `a` violates; empty iff `a` is in the
/// admissible set.
pub fn check_feasible(a: &MatchAssignment, cs: &ConstraintSet, ds: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    if let Err(e) = cs.validate(ds) {
        out.push(v("config", f64::INFINITY, e.to_string()));
        return out;
    }
    if let Err(e) = MatchAssignment::new(a.pairs().to_vec(), ds.n_treated(), ds.n_control()) {
        out.push(v("assignment", f64::INFINITY, e.to_string()));
        return out;
    }
    let size = a.size();
    if cs.caliper.is_some() {
        for &(i, j) in a.pairs() {
            let ex = ilp::pair_caliper_excess(ds, cs, i, j);
            if ex > TOL {
                out.push(v("caliper", ex, format!("pair ({i}, {j})")));
            }
        }
    }
    if size > 0 {
        for (name, eps) in &cs.balance {
            let p = ds.covariate_position(name).expect("validated");
            let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
            let mt = mean(a.pairs().iter().map(|&(i, _)| ds.treated_unit(i).covariates[p].as_num().unwrap()).collect());
            let mc = mean(a.pairs().iter().map(|&(_, j)| ds.control_unit(j).covariates[p].as_num().unwrap()).collect());
            let ex = (mt - mc).abs() - eps;
            if ex > TOL * (1.0 + eps) {
                out.push(v("balance", ex, format!("covariate {name:?}: matched means {mt} vs {mc}")));
            }
        }
    }
    if let Some(b) = &cs.binning {
        let st = stratify(ds, b).expect("validated");
        for &(i, j) in a.pairs() {
            if !st.same_stratum(i, j) {
                out.push(v("binning", 1.0, format!("pair ({i}, {j}) leaves stratum")));
            }
        }
        if cs.full_strata {
            for (l, s) in st.strata.iter().enumerate() {
                let got = a.pairs().iter().filter(|&&(i, _)| st.stratum_of_treated(i) == l).count();
                if got != s.m() {
                    out.push(v("full_strata", s.m().abs_diff(got) as f64, format!("stratum {l}: {got} of {} pairs", s.m())));
                }
            }
        }
    }
    if cs.satt && size != ds.n_treated() {
        out.push(v("satt", (ds.n_treated() - size) as f64, format!("{} treated units unmatched", ds.n_treated() - size)));
    }
    match cs.cardinality {
        Some(Cardinality::FixedM(m)) if size != m => {
            out.push(v("cardinality", m.abs_diff(size) as f64, format!("M={size}, required {m}")));
        }
        Some(Cardinality::FixedDiscordant(m)) => match super::pair_counts(ds, a) {
            Ok(pc) if pc.discordant() != m => {
                out.push(v("cardinality", m.abs_diff(pc.discordant()) as f64, format!("B+C={}, required {m}", pc.discordant())))
            }
            Ok(_) => {}
            Err(e) => out.push(v("cardinality", f64::INFINITY, e.to_string())),
        },
        Some(Cardinality::MaxFeasible) => {
            let rest = ConstraintSet { cardinality: None, fitness: None, ..cs.clone() };
            match max_objective(ds, &rest, &|_, _| 1.0) {
                Some(best) if (best.round() as usize) != size => {
                    out.push(v("cardinality", (best - size as f64).abs(), format!("M={size}, maximum feasible {best}")))
                }
                Some(_) => {}
                None => out.push(v("cardinality", f64::INFINITY, "no feasible assignment".into())),
            }
        }
        _ => {}
    }
    if let Some(f) = &cs.fitness {
        let rest = ConstraintSet { fitness: None, ..cs.clone() };
        let coef = ilp::fitness_coef(ds, &f.coefficients);
        let fit: f64 = a.pairs().iter().map(|&(i, j)| coef(i, j)).sum();
        match max_objective(ds, &rest, &coef) {
            Some(maxfit) => {
                let ex = maxfit - f.epsilon - fit;
                if ex > TOL * (1.0 + maxfit.abs()) {
                    out.push(v("fitness", ex, format!("fitness {fit}, floor {}", maxfit - f.epsilon)));
                }
            }
            None => out.push(v("fitness", f64::INFINITY, "fitness maximum unavailable".into())),
        }
    }
    out
}

fn max_objective(ds: &Dataset, rest: &ConstraintSet, coef: &dyn Fn(usize, usize) -> f64) -> Option<f64> {
    let mut p = ilp::build_matching_program(ds, rest, &ObjectiveSpec::MatchCount, Sense::Max, &[], &SolveOptions::default()).ok()?;
    p.set_objective(coef);
    let s = ilp::solve(&p, &SolveOptions::default()).ok()?;
    (s.status == Status::Optimal).then(|| s.objective.unwrap())
}
