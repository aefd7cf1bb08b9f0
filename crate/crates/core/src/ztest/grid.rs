use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{z_of, z_pvalue, z_stat, IterationTrace, TraceInterval, TracePoint, ZResult, ZSide};
use crate::error::{Error, Result};
use crate::ilp::{self, Cmp, ExtraConstraint, MatchingProgram, ObjectiveSpec, Sense, SolveOptions, Status};
use crate::model::{ConstraintSet, Dataset, DiffStats, MatchAssignment};

/// Whether grid programs cap the squared-difference sum from above (mean
/// differences positive) or floor it from below (all means non-positive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    Cap,
    Floor,
    Pinned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZOptions {
    pub eps: f64,
    /// Initial number of grid points.
    pub grid: usize,
    /// Each refined interval is split into this many equal parts.
    pub refine: usize,
    pub max_iter: usize,
    /// Refinement stops (unconverged) once the grid holds this many points.
    pub max_points: usize,
    /// Zero-variance grid solutions that may be excluded by no-good rows when
    /// they keep the grid from closing.
    pub max_cuts: usize,
    pub solve: SolveOptions,
    /// Pin the squared-difference sum to this value (sharp-null variant).
    pub pin: Option<f64>,
    pub keep_trace: bool,
}

impl Default for ZOptions {
    fn default() -> Self {
        ZOptions {
            eps: 1e-6,
            grid: 16,
            refine: 4,
            max_iter: 60,
            max_points: 4096,
            max_cuts: 64,
            solve: SolveOptions { gap: Some(0.0), ..SolveOptions::default() },
            pin: None,
            keep_trace: true,
        }
    }
}

/// Optimal assignment of one grid program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSol {
    pub assignment: MatchAssignment,
    /// Mean difference.
    pub f1: f64,
    /// Sum of squared differences.
    pub f2: f64,
    /// `None` for zero-variance assignments.
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub b: f64,
    /// `None` when the program at `b` is infeasible.
    pub sol: Option<PointSol>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceGrid {
    pub mode: GridMode,
    pub m: usize,
    /// Strictly increasing in `b`.
    pub points: Vec<GridPoint>,
}

impl VarianceGrid {
    pub fn n_intervals(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    /// Interval `k` spans points `k` and `k + 1`; a cap grid bounds it with the
    /// solution at its upper end, a floor grid with the one at its lower end.
    fn interval_sol(&self, k: usize) -> Option<&PointSol> {
        match self.mode {
            GridMode::Floor => self.points[k].sol.as_ref(),
            _ => self.points[k + 1].sol.as_ref(),
        }
    }

    /// Upper bound on z over assignments whose squared-difference sum lies in
    /// interval `k`.
    pub fn interval_ub(&self, k: usize) -> f64 {
        let (lo, hi) = (self.points[k].b, self.points[k + 1].b);
        match self.interval_sol(k) {
            None => f64::NEG_INFINITY,
            Some(s) => sup_z(s.f1, lo, hi, self.m),
        }
    }

    /// Best nondegenerate z among the grid solutions, with its point index.
    pub fn incumbent(&self) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (k, p) in self.points.iter().enumerate() {
            if let Some(z) = p.sol.as_ref().and_then(|s| s.z) {
                if best.is_none_or(|(b, _)| z > b) {
                    best = Some((z, k));
                }
            }
        }
        best
    }
}

/// Supremum of z(f1, f2) for f2 in [lo, hi] at fixed mean f1.
fn sup_z(f1: f64, lo: f64, hi: f64, m: usize) -> f64 {
    if f1 > 0.0 {
        z_of(f1, lo, m).unwrap_or(f64::INFINITY)
    } else if f1 == 0.0 {
        0.0
    } else {
        z_of(f1, hi, m).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Lower and upper bounds on the maximal z implied by the grid: the lower
/// bound is the best of the per-point bounds and the attained z values, the
/// upper bound the largest per-interval bound.
pub fn grid_bounds(grid: &VarianceGrid) -> Result<(f64, f64)> {
    let mut lb = f64::NEG_INFINITY;
    let mut any = false;
    for p in &grid.points {
        let Some(s) = &p.sol else { continue };
        any = true;
        // The solver meets the cap (floor) only up to its feasibility
        // tolerance, so the bound uses whichever of b and f2 is safe.
        let formula = match grid.mode {
            GridMode::Cap if s.f1 > 0.0 => z_of(s.f1, p.b.max(s.f2), grid.m),
            GridMode::Floor if s.f1 <= 0.0 => z_of(s.f1, p.b.min(s.f2), grid.m),
            _ => None,
        };
        for t in formula.into_iter().chain(s.z) {
            lb = lb.max(t);
        }
    }
    if !any {
        return Err(Error::Invalid("grid has no solved points".into()));
    }
    let ub = (0..grid.n_intervals()).map(|k| grid.interval_ub(k)).fold(lb, f64::max);
    Ok((lb, ub))
}

struct Side<'a> {
    ds: &'a Dataset,
    base: MatchingProgram,
    m: usize,
    /// +1 for the maximum, -1 for the minimum (objective negated).
    s: f64,
    opts: &'a ZOptions,
    /// No-good rows added to `base`.
    cuts: usize,
}

impl Side<'_> {
    fn eval(&self, a: MatchAssignment) -> PointSol {
        let d: Vec<f64> = a.pairs().iter().map(|&(i, j)| self.s * (self.ds.yt(i) - self.ds.yc(j))).collect();
        let st = DiffStats::from_diffs(&d).expect("grid solutions have M >= 2 pairs");
        PointSol { assignment: a, f1: st.mean, f2: st.sum_sq, z: z_stat(&st).ok() }
    }

    fn solve_with(&self, extra: &[ExtraConstraint]) -> Result<Option<PointSol>> {
        let mut p = self.base.clone();
        for e in extra {
            p.add_extra(self.ds, e)?;
        }
        let s = ilp::solve(&p, &self.opts.solve)?;
        match s.status {
            Status::Optimal => Ok(Some(self.eval(s.assignment.unwrap()))),
            Status::Infeasible => Ok(None),
            Status::BudgetExceeded => Err(Error::BudgetExceeded {
                nodes: s.nodes,
                incumbent: s.objective,
                bound: s.bound.unwrap_or(f64::NAN),
            }),
        }
    }

    fn solve_at(&self, mode: GridMode, b: f64) -> Result<Option<PointSol>> {
        match mode {
            GridMode::Floor => self.solve_with(&[ExtraConstraint::VarianceFloor(b)]),
            _ => self.solve_with(&[ExtraConstraint::VarianceCap(b)]),
        }
    }
}

/// Solution at a new point `b` when a neighbouring solution provably carries
/// over: a cap optimum at a larger cap that already meets `b` (or a floor
/// optimum at a smaller floor that already meets `b`) stays optimal.
fn reuse(points: &[GridPoint], mode: GridMode, b: f64) -> Option<Option<PointSol>> {
    match mode {
        GridMode::Floor => {
            let p = points.iter().rev().find(|p| p.b <= b)?;
            match &p.sol {
                None => Some(None),
                Some(s) if s.f2 >= b => Some(Some(s.clone())),
                _ => None,
            }
        }
        _ => {
            let p = points.iter().find(|p| p.b >= b)?;
            match &p.sol {
                None => Some(None),
                Some(s) if s.f2 <= b => Some(Some(s.clone())),
                _ => None,
            }
        }
    }
}

/// A solution may overshoot its cap (floor) by the solver tolerance. It is
/// then optimal for the cap `f2` as well, so the point is recorded there and
/// interval bounds close in on the solution's own z.
fn settle(mode: GridMode, b: f64, sol: Option<&PointSol>) -> f64 {
    match (mode, sol) {
        (GridMode::Floor, Some(s)) => b.min(s.f2),
        (_, Some(s)) => b.max(s.f2),
        (_, None) => b,
    }
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return vec![hi];
    }
    let r = (hi / lo).powf(1.0 / (n - 1) as f64);
    let mut out: Vec<f64> = (0..n).map(|k| lo * r.powi(k as i32)).collect();
    out[n - 1] = hi;
    out
}

fn add_points(side: &Side, grid: &mut VarianceGrid, mut bs: Vec<f64>) -> Result<usize> {
    bs.sort_by(f64::total_cmp);
    bs.dedup();
    let close = |a: f64, b: f64| (a - b).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs());
    bs.retain(|&b| !grid.points.iter().any(|p| close(p.b, b)));
    let mut fresh = Vec::new();
    let mut known = Vec::new();
    for b in bs {
        match reuse(&grid.points, grid.mode, b) {
            Some(sol) => known.push(GridPoint { b, sol }),
            None => fresh.push(b),
        }
    }
    let solved: Vec<Result<GridPoint>> = fresh
        .par_iter()
        .map(|&b| side.solve_at(grid.mode, b).map(|sol| GridPoint { b: settle(grid.mode, b, sol.as_ref()), sol }))
        .collect();
    let n_solved = solved.len();
    for g in solved {
        known.push(g?);
    }
    grid.points.extend(known);
    grid.points.sort_by(|a, b| a.b.total_cmp(&b.b));
    grid.points.dedup_by(|a, b| a.b == b.b);
    Ok(n_solved)
}

fn snapshot(grid: &VarianceGrid, iteration: usize, lb: f64, ub: f64) -> IterationTrace {
    IterationTrace {
        iteration,
        lb,
        ub,
        points: grid
            .points
            .iter()
            .map(|p| TracePoint {
                b: p.b,
                f1: p.sol.as_ref().map(|s| s.f1),
                f2: p.sol.as_ref().map(|s| s.f2),
                z: p.sol.as_ref().and_then(|s| s.z),
            })
            .collect(),
        intervals: (0..grid.n_intervals())
            .map(|k| {
                let ub_k = grid.interval_ub(k);
                TraceInterval { lo: grid.points[k].b, hi: grid.points[k + 1].b, ub: ub_k, active: ub_k >= lb }
            })
            .collect(),
    }
}

/// Outcome of one grid run. `side` is `None` when no grid solution had
/// positive variance.
struct Pass {
    side: Option<ZSide>,
    solves: usize,
    /// Distinct zero-variance grid solutions, reported when the run did not
    /// converge.
    degenerate: Vec<MatchAssignment>,
}

fn degenerate_solutions(grid: &VarianceGrid) -> Vec<MatchAssignment> {
    let mut out: Vec<MatchAssignment> = Vec::new();
    for s in grid.points.iter().filter_map(|p| p.sol.as_ref()).filter(|s| s.z.is_none()) {
        if !out.contains(&s.assignment) {
            out.push(s.assignment.clone());
        }
    }
    out
}

fn maximize(side: &Side) -> Result<Pass> {
    let opts = side.opts;
    let Some(a0) = side.solve_with(&[])? else {
        // Once cuts are in, an empty program means only zero-variance
        // assignments were admissible.
        if side.cuts > 0 {
            return Err(Error::DegenerateVariance);
        }
        return Err(Error::Infeasible(format!("no admissible assignment with M={}", side.m)));
    };
    let mut solves = 1usize;

    if let Some(c) = opts.pin {
        let tol = 1e-9 * c.abs().max(1.0);
        let sol = side
            .solve_with(&[ExtraConstraint::VarianceCap(c + tol), ExtraConstraint::VarianceFloor(c - tol)])?
            .ok_or_else(|| Error::Infeasible(format!("no admissible assignment with squared-difference sum {c}")))?;
        let z = sol.z.ok_or(Error::DegenerateVariance)?;
        let side = ZSide {
            sense: Sense::Max,
            z,
            lb: z,
            ub: z,
            mean: sol.f1,
            sd: (sol.f2 / side.m as f64 - sol.f1 * sol.f1).max(0.0).sqrt(),
            witness: sol.assignment,
            mode: GridMode::Pinned,
            iterations: 0,
            converged: true,
            solves: solves + 1,
            excluded: 0,
            trace: Vec::new(),
        };
        return Ok(Pass { side: Some(side), solves: solves + 1, degenerate: Vec::new() });
    }

    let mode = if a0.f1 > 0.0 { GridMode::Cap } else { GridMode::Floor };
    let mut sq: Vec<f64> = side.base.vars.iter().map(|&(i, j)| (side.ds.yt(i) - side.ds.yc(j)).powi(2)).collect();
    sq.sort_by(f64::total_cmp);
    let gmin: f64 = sq[..side.m].iter().sum();
    let gmax: f64 = sq[sq.len() - side.m..].iter().sum();
    let (bottom, top) = match mode {
        GridMode::Cap => (gmin.min(a0.f2), a0.f2),
        _ => (gmin, gmax.max(a0.f2)),
    };
    let seed_point = match mode {
        GridMode::Cap => GridPoint { b: top, sol: Some(a0.clone()) },
        _ => GridPoint { b: bottom, sol: Some(a0.clone()) },
    };
    let mut grid = VarianceGrid { mode, m: side.m, points: vec![seed_point] };
    let mut n_grid = opts.grid.max(2);
    for attempt in 0..2 {
        let start = bottom.max(top * 1e-4);
        let mut bs = geometric(start, top, n_grid - 1);
        bs.push(bottom);
        solves += add_points(side, &mut grid, bs)?;
        if grid.incumbent().is_some() {
            break;
        }
        if attempt == 1 {
            return Ok(Pass { side: None, solves, degenerate: degenerate_solutions(&grid) });
        }
        n_grid *= 2;
    }

    let mut trace = Vec::new();
    let mut ub_prev = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0usize;
    loop {
        let (lb, ub_now) = grid_bounds(&grid)?;
        let ub = ub_now.min(ub_prev);
        ub_prev = ub;
        if opts.keep_trace {
            trace.push(snapshot(&grid, iterations, lb, ub));
        }
        if ub - lb < opts.eps {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        if grid.points.len() >= opts.max_points {
            log::warn!("z grid reached {} points (gap {})", grid.points.len(), ub - lb);
            break;
        }
        let mut bs = Vec::new();
        for k in 0..grid.n_intervals() {
            if grid.interval_ub(k) < lb + opts.eps {
                continue;
            }
            let (lo, hi) = (grid.points[k].b, grid.points[k + 1].b);
            for t in 1..opts.refine {
                bs.push(lo + (hi - lo) * t as f64 / opts.refine as f64);
            }
            if let Some(s) = grid.interval_sol(k) {
                if s.f2 > lo && s.f2 < hi {
                    bs.push(s.f2);
                }
            }
        }
        let before = grid.points.len();
        solves += add_points(side, &mut grid, bs)?;
        iterations += 1;
        if grid.points.len() == before {
            log::warn!("z grid cannot be refined further (gap {})", ub - lb);
            break;
        }
    }
    let (lb, ub) = (trace_last_lb(&grid)?, ub_prev);
    let (z, k) = grid.incumbent().expect("incumbent exists after initialization");
    let sol = grid.points[k].sol.clone().unwrap();
    debug_assert!((z - lb).abs() <= 1e-12 * z.abs().max(1.0) || lb > z);
    let degenerate = if converged { Vec::new() } else { degenerate_solutions(&grid) };
    let out = ZSide {
        sense: Sense::Max,
        z,
        lb: lb.max(z),
        ub: ub.max(z),
        mean: sol.f1,
        sd: (sol.f2 / side.m as f64 - sol.f1 * sol.f1).max(0.0).sqrt(),
        witness: sol.assignment,
        mode,
        iterations,
        converged,
        solves,
        excluded: side.cuts,
        trace,
    };
    Ok(Pass { side: Some(out), solves, degenerate })
}

fn trace_last_lb(grid: &VarianceGrid) -> Result<f64> {
    Ok(grid_bounds(grid)?.0)
}

fn flip(mut side: ZSide) -> ZSide {
    side.sense = Sense::Min;
    side.z = -side.z;
    let (lb, ub) = (side.lb, side.ub);
    side.lb = -ub;
    side.ub = -lb;
    side.mean = -side.mean;
    for t in side.trace.iter_mut() {
        let (lb, ub) = (t.lb, t.ub);
        t.lb = -ub;
        t.ub = -lb;
        for p in t.points.iter_mut() {
            p.f1 = p.f1.map(|x| -x);
            p.z = p.z.map(|x| -x);
        }
        for iv in t.intervals.iter_mut() {
            iv.ub = -iv.ub;
        }
    }
    side
}

/// One extreme of z over assignments of `m` pairs admitted by `cs`.
pub fn robust_z_side(ds: &Dataset, cs: &ConstraintSet, m: usize, opts: &ZOptions, sense: Sense) -> Result<ZSide> {
    if ds.is_binary() {
        return Err(Error::OutcomeKind("real"));
    }
    if m < 2 {
        return Err(Error::DegenerateVariance);
    }
    if !(opts.eps > 0.0) || opts.refine < 2 {
        return Err(Error::Invalid("z options need eps > 0 and refine >= 2".into()));
    }
    let s = match sense {
        Sense::Max => 1.0,
        Sense::Min => -1.0,
    };
    let mut base = ilp::build_matching_program(ds, cs, &ObjectiveSpec::DiffSum, Sense::Max, &[ExtraConstraint::Cardinality(m)], &opts.solve)?;
    base.set_objective(|i, j| s * (ds.yt(i) - ds.yc(j)));
    if base.vars.len() < m {
        return Err(Error::Infeasible(format!("no admissible assignment with M={m}")));
    }
    let mut side = Side { ds, base, m, s, opts, cuts: 0 };
    let mut solves = 0;
    let out = loop {
        let pass = maximize(&side)?;
        solves += pass.solves;
        let room = opts.max_cuts - side.cuts;
        if pass.degenerate.is_empty() || room == 0 {
            let mut out = pass.side.ok_or(Error::DegenerateVariance)?;
            out.solves = solves;
            break out;
        }
        // A zero-variance assignment with the largest mean satisfies every
        // cap above its own sum, so interval bounds near it stay infinite.
        // It never attains z, so excluding it leaves the extreme unchanged.
        for a in pass.degenerate.iter().take(room) {
            side.base.add_pair_constraint("exclude", |i, j| if a.contains(i, j) { 1.0 } else { 0.0 }, Cmp::Le, (m - 1) as f64);
            side.cuts += 1;
        }
        log::debug!("z grid restarted with {} zero-variance assignments excluded", side.cuts);
    };
    Ok(match sense {
        Sense::Max => out,
        Sense::Min => flip(out),
    })
}

/// Both extremes and the conservative p-value.
pub fn robust_z(ds: &Dataset, cs: &ConstraintSet, m: usize, opts: &ZOptions) -> Result<ZResult> {
    let plus = robust_z_side(ds, cs, m, opts, Sense::Max)?;
    let minus = robust_z_side(ds, cs, m, opts, Sense::Min)?;
    Ok(ZResult { m, z_plus: plus.z, z_minus: minus.z, p_value: z_pvalue(plus.z, minus.z), plus, minus })
}
