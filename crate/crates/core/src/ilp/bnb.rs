//! Depth-first branch-and-bound over the LP relaxation.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::program::{Cmp, MatchingProgram, Sense};
use super::simplex::{solve_lp, LpOutcome, LpRow};
use crate::error::Result;
use crate::model::MatchAssignment;
use crate::stats::accurate_sum;

const FRAC_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Relative optimality gap; `None` picks 0 for integral objectives and
    /// 1e-6 otherwise.
    pub gap: Option<f64>,
    pub node_limit: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit: Option<Duration>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { gap: None, node_limit: 1_000_000, time_limit: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: Status,
    pub assignment: Option<MatchAssignment>,
    pub objective: Option<f64>,
    /// Best bound on the optimum in the program's own sense.
    pub bound: Option<f64>,
    pub nodes: usize,
}

struct Node {
    fixed: Vec<i8>,
    bound: f64,
}

enum Relaxation {
    Infeasible,
    Solved { bound: f64, values: Vec<Option<f64>> },
}

/// LP relaxation at a node. Objective is in maximization form.
fn relax(p: &MatchingProgram, c: &[f64], fixed: &[i8]) -> Result<Relaxation> {
    let n = p.vars.len();
    let mut used_t = vec![false; p.n_treated];
    let mut used_c = vec![false; p.n_control];
    let mut constant = 0.0;
    for v in 0..n {
        if fixed[v] == 1 {
            let (i, j) = p.vars[v];
            used_t[i] = true;
            used_c[j] = true;
            constant += c[v];
        }
    }
    let mut col = vec![usize::MAX; n];
    let mut free = Vec::new();
    for v in 0..n {
        let (i, j) = p.vars[v];
        if fixed[v] == -1 && !used_t[i] && !used_c[j] {
            col[v] = free.len();
            free.push(v);
        }
    }
    let mut rows = Vec::new();
    let mut by_t: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.n_treated];
    let mut by_c: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.n_control];
    for (k, &v) in free.iter().enumerate() {
        let (i, j) = p.vars[v];
        by_t[i].push((k, 1.0));
        by_c[j].push((k, 1.0));
    }
    for coefs in by_t.into_iter().chain(by_c) {
        if !coefs.is_empty() {
            rows.push(LpRow { coefs, cmp: Cmp::Le, rhs: 1.0 });
        }
    }
    for con in &p.constraints {
        let mut coefs = Vec::new();
        let mut on = Vec::new();
        for &(v, a) in &con.coefs {
            if fixed[v] == 1 {
                on.push(a);
            } else if col[v] != usize::MAX {
                coefs.push((col[v], a));
            }
        }
        let rhs = accurate_sum(std::iter::once(con.rhs).chain(on.into_iter().map(|a| -a)));
        if coefs.is_empty() {
            let tol = con.tolerance();
            let ok = match con.cmp {
                Cmp::Le => 0.0 <= rhs + tol,
                Cmp::Ge => 0.0 >= rhs - tol,
                Cmp::Eq => rhs.abs() <= tol,
            };
            if !ok {
                return Ok(Relaxation::Infeasible);
            }
            continue;
        }
        rows.push(LpRow { coefs, cmp: con.cmp, rhs });
    }
    let obj: Vec<f64> = free.iter().map(|&v| c[v]).collect();
    match solve_lp(free.len(), &obj, &rows)? {
        LpOutcome::Infeasible => Ok(Relaxation::Infeasible),
        LpOutcome::Optimal { x, value } => {
            let mut values = vec![None; n];
            for (k, &v) in free.iter().enumerate() {
                values[v] = Some(x[k]);
            }
            Ok(Relaxation::Solved { bound: constant + value, values })
        }
    }
}

/// Exact (within gap) optimization of a matching program. Deterministic:
/// branching picks the most fractional variable, lowest pair on ties, and
/// explores the "pair on" child first.
pub fn solve(p: &MatchingProgram, opts: &SolveOptions) -> Result<Solution> {
    let sign = match p.sense {
        Sense::Max => 1.0,
        Sense::Min => -1.0,
    };
    let c: Vec<f64> = p.objective.iter().map(|x| sign * x).collect();
    let integral = p.integral_objective();
    let gap = opts.gap.unwrap_or(if integral { 0.0 } else { 1e-6 });
    let n = p.vars.len();
    let start = Instant::now();

    let mut incumbent: Option<(f64, Vec<bool>)> = None;
    let mut pruned_bound = f64::NEG_INFINITY;
    let mut nodes = 0usize;
    let mut stack = vec![Node { fixed: vec![-1; n], bound: f64::INFINITY }];
    let prunable = |bound: f64, inc: &Option<(f64, Vec<bool>)>| match inc {
        None => false,
        Some((z, _)) => bound <= z + gap * z.abs().max(1.0) + 1e-9,
    };

    while let Some(node) = stack.pop() {
        let over_time = opts.time_limit.is_some_and(|t| start.elapsed() > t);
        if nodes >= opts.node_limit || over_time {
            let open = stack.iter().map(|n| n.bound).fold(node.bound, f64::max);
            let inc = incumbent.as_ref().map(|x| x.0);
            let bound = open.max(pruned_bound).max(inc.unwrap_or(f64::NEG_INFINITY));
            return Ok(Solution {
                status: Status::BudgetExceeded,
                assignment: incumbent.as_ref().map(|(_, x)| p.assignment_of(x)),
                objective: inc.map(|z| sign * z),
                bound: Some(sign * bound),
                nodes,
            });
        }
        nodes += 1;
        if prunable(node.bound, &incumbent) {
            pruned_bound = pruned_bound.max(node.bound);
            continue;
        }
        let (bound, values) = match relax(p, &c, &node.fixed)? {
            Relaxation::Infeasible => continue,
            Relaxation::Solved { bound, values } => (bound, values),
        };
        let bound = if integral { (bound + 1e-9).floor() } else { bound };
        if prunable(bound, &incumbent) {
            pruned_bound = pruned_bound.max(bound);
            continue;
        }
        let mut branch_var = None;
        let mut best_frac = FRAC_TOL;
        for (v, x) in values.iter().enumerate() {
            if let Some(x) = x {
                let f = x.min(1.0 - x);
                if f > best_frac {
                    best_frac = f;
                    branch_var = Some(v);
                }
            }
        }
        if branch_var.is_none() {
            let point: Vec<bool> = (0..n).map(|v| node.fixed[v] == 1 || values[v].is_some_and(|x| x > 0.5)).collect();
            if p.is_feasible(&point) {
                let z: f64 = c.iter().zip(&point).filter(|(_, &on)| on).map(|(a, _)| a).sum();
                if incumbent.as_ref().is_none_or(|(best, _)| z > *best) {
                    incumbent = Some((z, point));
                }
                continue;
            }
            // Rounded LP point misses a constraint tolerance: keep splitting.
            branch_var = (0..n).find(|&v| values[v].is_some_and(|x| x > 0.5)).or_else(|| (0..n).find(|&v| values[v].is_some()));
            if branch_var.is_none() {
                continue;
            }
        }
        let v = branch_var.unwrap();
        let mut zero = node.fixed.clone();
        zero[v] = 0;
        let mut one = node.fixed;
        one[v] = 1;
        stack.push(Node { fixed: zero, bound });
        stack.push(Node { fixed: one, bound });
    }

    Ok(match incumbent {
        None => Solution { status: Status::Infeasible, assignment: None, objective: None, bound: None, nodes },
        Some((z, x)) => Solution {
            status: Status::Optimal,
            assignment: Some(p.assignment_of(&x)),
            objective: Some(sign * z),
            bound: Some(sign * pruned_bound.max(z)),
            nodes,
        },
    })
}
