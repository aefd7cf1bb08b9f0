use super::bnb::{Solution, Status};
use super::program::{MatchingProgram, Sense};
use crate::error::{Error, Result};

pub const ORACLE_MAX_SIDE: usize = 20;

/// Visits every feasible 0-1 point of the program (each treated unit matched
/// to nothing or to an unused admissible control), in a fixed order.
pub fn for_each_feasible(p: &MatchingProgram, mut f: impl FnMut(&[bool])) -> Result<()> {
    if p.n_treated > ORACLE_MAX_SIDE || p.n_control > ORACLE_MAX_SIDE {
        return Err(Error::Invalid(format!(
            "enumeration guard: {}x{} exceeds {ORACLE_MAX_SIDE}x{ORACLE_MAX_SIDE}",
            p.n_treated, p.n_control
        )));
    }
    let mut options: Vec<Vec<(usize, usize)>> = vec![Vec::new(); p.n_treated];
    for (v, &(i, j)) in p.vars.iter().enumerate() {
        options[i].push((j, v));
    }
    let mut x = vec![false; p.vars.len()];
    let mut used = vec![false; p.n_control];
    fn rec(
        i: usize,
        p: &MatchingProgram,
        options: &[Vec<(usize, usize)>],
        x: &mut Vec<bool>,
        used: &mut Vec<bool>,
        f: &mut dyn FnMut(&[bool]),
    ) {
        if i == options.len() {
            if p.is_feasible(x) {
                f(x);
            }
            return;
        }
        rec(i + 1, p, options, x, used, f);
        for &(j, v) in &options[i] {
            if !used[j] {
                used[j] = true;
                x[v] = true;
                rec(i + 1, p, options, x, used, f);
                x[v] = false;
                used[j] = false;
            }
        }
    }
    rec(0, p, &options, &mut x, &mut used, &mut f);
    Ok(())
}

/// Exact optimum by exhaustive enumeration; the first best point found wins.
pub fn enumerate_oracle(p: &MatchingProgram) -> Result<Solution> {
    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut count = 0usize;
    for_each_feasible(p, |x| {
        count += 1;
        let z = p.objective_value(x);
        let better = match (&best, p.sense) {
            (None, _) => true,
            (Some((b, _)), Sense::Max) => z > *b,
            (Some((b, _)), Sense::Min) => z < *b,
        };
        if better {
            best = Some((z, x.to_vec()));
        }
    })?;
    Ok(match best {
        None => Solution { status: Status::Infeasible, assignment: None, objective: None, bound: None, nodes: count },
        Some((z, x)) => Solution {
            status: Status::Optimal,
            assignment: Some(p.assignment_of(&x)),
            objective: Some(z),
            bound: Some(z),
            nodes: count,
        },
    })
}
