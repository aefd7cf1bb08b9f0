use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::accurate_sum;
use crate::model::{
    caliper_excess, stratify, weighted_l1, ConstraintSet, Dataset, FitnessCoefficients, MatchAssignment,
    Stratification,
};

use super::{solve, SolveOptions, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinConstraint {
    pub name: String,
    /// `(variable index, coefficient)`.
    pub coefs: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

impl LinConstraint {
    pub fn lhs(&self, x: &[bool]) -> f64 {
        accurate_sum(self.coefs.iter().filter(|(v, _)| x[*v]).map(|(_, a)| *a))
    }

    /// Violation amount at the 0-1 point `x` (0 when satisfied).
    pub fn violation(&self, x: &[bool]) -> f64 {
        let l = self.lhs(x);
        match self.cmp {
            Cmp::Le => (l - self.rhs).max(0.0),
            Cmp::Ge => (self.rhs - l).max(0.0),
            Cmp::Eq => (l - self.rhs).abs(),
        }
    }

    /// Slack allowed when checking a 0-1 point. Row sums are compensated, so
    /// a few ulps of the row's scale suffice and nearby right-hand sides stay
    /// distinguishable.
    pub fn tolerance(&self) -> f64 {
        let scale = self.coefs.iter().fold(self.rhs.abs(), |m, (_, a)| m.max(a.abs()));
        16.0 * f64::EPSILON * (1.0 + scale)
    }
}

/// 0-1 program over admissible (treated, control) pairs. Row and column
/// "at most one" constraints are implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingProgram {
    pub n_treated: usize,
    pub n_control: usize,
    /// Admissible pairs, sorted.
    pub vars: Vec<(usize, usize)>,
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub constraints: Vec<LinConstraint>,
}

impl MatchingProgram {
    pub fn new(n_treated: usize, n_control: usize, mut vars: Vec<(usize, usize)>, sense: Sense) -> Self {
        vars.sort_unstable();
        vars.dedup();
        let n = vars.len();
        MatchingProgram { n_treated, n_control, vars, objective: vec![0.0; n], sense, constraints: Vec::new() }
    }

    pub fn var_index(&self, i: usize, j: usize) -> Option<usize> {
        self.vars.binary_search(&(i, j)).ok()
    }

    /// Adds `sum_v f(pair_v) x_v cmp rhs`, dropping zero coefficients.
    pub fn add_pair_constraint(&mut self, name: &str, f: impl Fn(usize, usize) -> f64, cmp: Cmp, rhs: f64) {
        let coefs = self
            .vars
            .iter()
            .enumerate()
            .map(|(v, &(i, j))| (v, f(i, j)))
            .filter(|(_, a)| *a != 0.0)
            .collect();
        self.constraints.push(LinConstraint { name: name.to_string(), coefs, cmp, rhs });
    }

    pub fn add_extra(&mut self, ds: &Dataset, e: &ExtraConstraint) -> Result<()> {
        add_extra(self, ds, e)
    }

    pub fn set_objective(&mut self, f: impl Fn(usize, usize) -> f64) {
        self.objective = self.vars.iter().map(|&(i, j)| f(i, j)).collect();
    }

    /// True when every objective coefficient is an integer.
    pub fn integral_objective(&self) -> bool {
        self.objective.iter().all(|c| c.fract() == 0.0)
    }

    pub fn indicator(&self, a: &MatchAssignment) -> Option<Vec<bool>> {
        let mut x = vec![false; self.vars.len()];
        for &(i, j) in a.pairs() {
            x[self.var_index(i, j)?] = true;
        }
        Some(x)
    }

    pub fn assignment_of(&self, x: &[bool]) -> MatchAssignment {
        let pairs = self.vars.iter().zip(x).filter(|(_, &on)| on).map(|(p, _)| *p).collect();
        MatchAssignment::new(pairs, self.n_treated, self.n_control).expect("0-1 point respects assignment rows")
    }

    pub fn objective_value(&self, x: &[bool]) -> f64 {
        self.objective.iter().zip(x).filter(|(_, &on)| on).map(|(c, _)| c).sum()
    }

    /// Whether the 0-1 point satisfies the assignment rows and every side
    /// constraint (within each constraint's tolerance).
    pub fn is_feasible(&self, x: &[bool]) -> bool {
        let mut ut = vec![false; self.n_treated];
        let mut uc = vec![false; self.n_control];
        for (v, &(i, j)) in self.vars.iter().enumerate() {
            if x[v] && (std::mem::replace(&mut ut[i], true) || std::mem::replace(&mut uc[j], true)) {
                return false;
            }
        }
        self.constraints.iter().all(|c| c.violation(x) <= c.tolerance())
    }

    /// Debug dump in LP-file text format.
    pub fn to_lp_format(&self) -> String {
        let name = |v: usize| format!("x_{}_{}", self.vars[v].0, self.vars[v].1);
        let expr = |terms: &mut dyn Iterator<Item = (usize, f64)>| {
            let mut s = String::new();
            for (v, a) in terms {
                let sign = if a < 0.0 { "-" } else { "+" };
                let _ = write!(s, " {sign} {} {}", a.abs(), name(v));
            }
            if s.is_empty() {
                s.push_str(" 0");
            }
            s
        };
        let mut out = String::new();
        out.push_str(match self.sense {
            Sense::Max => "Maximize\n",
            Sense::Min => "Minimize\n",
        });
        let _ = writeln!(out, " obj:{}", expr(&mut self.objective.iter().copied().enumerate()));
        out.push_str("Subject To\n");
        for i in 0..self.n_treated {
            let vs: Vec<(usize, f64)> = (0..self.vars.len()).filter(|&v| self.vars[v].0 == i).map(|v| (v, 1.0)).collect();
            if !vs.is_empty() {
                let _ = writeln!(out, " row_t{i}:{} <= 1", expr(&mut vs.into_iter()));
            }
        }
        for j in 0..self.n_control {
            let vs: Vec<(usize, f64)> = (0..self.vars.len()).filter(|&v| self.vars[v].1 == j).map(|v| (v, 1.0)).collect();
            if !vs.is_empty() {
                let _ = writeln!(out, " col_c{j}:{} <= 1", expr(&mut vs.into_iter()));
            }
        }
        for (k, c) in self.constraints.iter().enumerate() {
            let op = match c.cmp {
                Cmp::Le => "<=",
                Cmp::Eq => "=",
                Cmp::Ge => ">=",
            };
            let label: String = c.name.chars().map(|ch| if ch.is_ascii_alphanumeric() { ch } else { '_' }).collect();
            let _ = writeln!(out, " c{k}_{label}:{} {op} {}", expr(&mut c.coefs.iter().copied()), c.rhs);
        }
        out.push_str("Binary\n");
        for v in 0..self.vars.len() {
            let _ = writeln!(out, " {}", name(v));
        }
        out.push_str("End\n");
        out
    }
}

/// Quantity optimized by a program.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    /// B − C (binary).
    DiscordantDiff,
    /// B + C (binary).
    DiscordantCount,
    /// `sum (y_i^t - y_j^c) a_ij`.
    DiffSum,
    /// `sum (y_i^t - y_j^c)^2 a_ij`.
    SquaredDiffSum,
    /// Number of pairs.
    MatchCount,
    /// The constraint set's fitness coefficients.
    Fitness,
}

/// Test-specific constraints added on top of a [`ConstraintSet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtraConstraint {
    /// `sum a_ij = M`.
    Cardinality(usize),
    /// `B + C = m` (binary).
    Discordant(usize),
    /// `sum (y^t - y^c)^2 a_ij <= b`.
    VarianceCap(f64),
    /// `sum (y^t - y^c)^2 a_ij >= b`.
    VarianceFloor(f64),
}

fn pair_coef<'a>(ds: &'a Dataset, cs: &'a ConstraintSet, spec: &ObjectiveSpec) -> Result<Box<dyn Fn(usize, usize) -> f64 + 'a>> {
    let need_binary = || -> Result<()> {
        if ds.is_binary() { Ok(()) } else { Err(Error::Invalid(format!("{spec:?} requires binary outcomes"))) }
    };
    Ok(match spec {
        ObjectiveSpec::DiscordantDiff => {
            need_binary()?;
            Box::new(move |i, j| ds.yt(i) - ds.yc(j))
        }
        ObjectiveSpec::DiscordantCount => {
            need_binary()?;
            Box::new(move |i, j| {
                let (t, c) = (ds.yt(i), ds.yc(j));
                t + c - 2.0 * t * c
            })
        }
        ObjectiveSpec::DiffSum => Box::new(move |i, j| ds.yt(i) - ds.yc(j)),
        ObjectiveSpec::SquaredDiffSum => Box::new(move |i, j| (ds.yt(i) - ds.yc(j)).powi(2)),
        ObjectiveSpec::MatchCount => Box::new(|_, _| 1.0),
        ObjectiveSpec::Fitness => {
            let Some(f) = &cs.fitness else {
                return Err(Error::Invalid("fitness objective requested but no fitness constraint configured".into()));
            };
            fitness_coef(ds, &f.coefficients)
        }
    })
}

pub(crate) fn fitness_coef<'a>(ds: &'a Dataset, fc: &'a FitnessCoefficients) -> Box<dyn Fn(usize, usize) -> f64 + 'a> {
    match fc {
        FitnessCoefficients::NegDistance { weights } => Box::new(move |i, j| {
            let d = weighted_l1(ds, weights, &ds.treated_unit(i).covariates, &ds.control_unit(j).covariates);
            // A categorical mismatch counts as a prohibitively large distance.
            if d.is_finite() { -d } else { -1e12 }
        }),
        FitnessCoefficients::MatchCount => Box::new(|_, _| 1.0),
        FitnessCoefficients::Pairs { pairs } => {
            let mut v = pairs.clone();
            v.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
            Box::new(move |i, j| match v.binary_search_by(|p| (p.0, p.1).cmp(&(i, j))) {
                Ok(k) => v[k].2,
                Err(_) => 0.0,
            })
        }
    }
}

pub(crate) fn add_extra(p: &mut MatchingProgram, ds: &Dataset, e: &ExtraConstraint) -> Result<()> {
    match *e {
        ExtraConstraint::Cardinality(m) => p.add_pair_constraint("cardinality", |_, _| 1.0, Cmp::Eq, m as f64),
        ExtraConstraint::Discordant(m) => {
            if !ds.is_binary() {
                return Err(Error::OutcomeKind("binary"));
            }
            p.add_pair_constraint(
                "discordant",
                |i, j| {
                    let (t, c) = (ds.yt(i), ds.yc(j));
                    t + c - 2.0 * t * c
                },
                Cmp::Eq,
                m as f64,
            )
        }
        ExtraConstraint::VarianceCap(b) => {
            p.add_pair_constraint("variance_cap", |i, j| (ds.yt(i) - ds.yc(j)).powi(2), Cmp::Le, b)
        }
        ExtraConstraint::VarianceFloor(b) => {
            p.add_pair_constraint("variance_floor", |i, j| (ds.yt(i) - ds.yc(j)).powi(2), Cmp::Ge, b)
        }
    }
    Ok(())
}

/// Admissible pairs and structural constraints of a constraint set, without
/// cardinality or fitness.
fn base_program(ds: &Dataset, cs: &ConstraintSet, strat: Option<&Stratification>) -> Result<MatchingProgram> {
    let mut vars = Vec::new();
    for i in 0..ds.n_treated() {
        for j in 0..ds.n_control() {
            if !cs.caliper_ok(ds, i, j) {
                continue;
            }
            if let Some(st) = strat {
                if !st.same_stratum(i, j) {
                    continue;
                }
            }
            vars.push((i, j));
        }
    }
    let mut p = MatchingProgram::new(ds.n_treated(), ds.n_control(), vars, Sense::Max);
    for (name, eps) in &cs.balance {
        let pos = ds.covariate_position(name).expect("validated");
        let x = |u: &crate::model::Unit| u.covariates[pos].as_num().expect("validated numeric");
        let diff = |i: usize, j: usize| x(ds.treated_unit(i)) - x(ds.control_unit(j));
        // |mean_t - mean_c| <= eps over matched units, multiplied through by M.
        p.add_pair_constraint(&format!("balance_hi:{name}"), |i, j| diff(i, j) - eps, Cmp::Le, 0.0);
        p.add_pair_constraint(&format!("balance_lo:{name}"), |i, j| diff(i, j) + eps, Cmp::Ge, 0.0);
    }
    if cs.satt {
        p.add_pair_constraint("satt", |_, _| 1.0, Cmp::Eq, ds.n_treated() as f64);
    }
    if cs.full_strata {
        let st = strat.expect("full_strata validated to need binning");
        for (l, s) in st.strata.iter().enumerate() {
            if s.m() > 0 {
                p.add_pair_constraint(
                    &format!("stratum_full:{l}"),
                    |i, _| if st.stratum_of_treated(i) == l { 1.0 } else { 0.0 },
                    Cmp::Eq,
                    s.m() as f64,
                );
            }
        }
    }
    Ok(p)
}

/// Builds the 0-1 program for `obj` over the assignments allowed by `cs` plus
/// the `extra` constraints. "Max feasible" cardinality and the fitness floor
/// are resolved here by auxiliary solves.
pub fn build_matching_program(
    ds: &Dataset,
    cs: &ConstraintSet,
    obj: &ObjectiveSpec,
    sense: Sense,
    extra: &[ExtraConstraint],
    opts: &SolveOptions,
) -> Result<MatchingProgram> {
    cs.validate(ds)?;
    let strat = match &cs.binning {
        Some(b) => Some(stratify(ds, b)?),
        None => None,
    };
    let mut p = base_program(ds, cs, strat.as_ref())?;
    let coef = pair_coef(ds, cs, obj)?;
    match cs.cardinality {
        Some(crate::model::Cardinality::FixedM(m)) => add_extra(&mut p, ds, &ExtraConstraint::Cardinality(m))?,
        Some(crate::model::Cardinality::FixedDiscordant(m)) => add_extra(&mut p, ds, &ExtraConstraint::Discordant(m))?,
        Some(crate::model::Cardinality::MaxFeasible) => {
            let mut q = p.clone();
            q.set_objective(|_, _| 1.0);
            let s = solve(&q, opts)?;
            let best = match s.status {
                Status::Optimal => s.objective.unwrap_or(0.0).round() as usize,
                Status::Infeasible => return Err(Error::Infeasible("no assignment meets the constraints".into())),
                Status::BudgetExceeded => {
                    return Err(Error::BudgetExceeded { nodes: s.nodes, incumbent: s.objective, bound: s.bound.unwrap_or(f64::NAN) })
                }
            };
            add_extra(&mut p, ds, &ExtraConstraint::Cardinality(best))?;
        }
        None => {}
    }
    if let Some(f) = &cs.fitness {
        let fc = fitness_coef(ds, &f.coefficients);
        let mut q = p.clone();
        q.set_objective(&fc);
        q.sense = Sense::Max;
        let s = solve(&q, opts)?;
        let maxfit = match s.status {
            Status::Optimal => s.objective.unwrap(),
            Status::Infeasible => return Err(Error::Infeasible("no assignment meets the constraints".into())),
            Status::BudgetExceeded => {
                return Err(Error::BudgetExceeded { nodes: s.nodes, incumbent: s.objective, bound: s.bound.unwrap_or(f64::NAN) })
            }
        };
        p.add_pair_constraint("fitness", &fc, Cmp::Ge, maxfit - f.epsilon);
    }
    for e in extra {
        add_extra(&mut p, ds, e)?;
    }
    p.set_objective(coef);
    p.sense = sense;
    Ok(p)
}

/// Excess of each pair over the caliper, used for violation reports.
pub(crate) fn pair_caliper_excess(ds: &Dataset, cs: &ConstraintSet, i: usize, j: usize) -> f64 {
    cs.caliper.as_ref().map_or(0.0, |c| caliper_excess(c, ds, i, j))
}
