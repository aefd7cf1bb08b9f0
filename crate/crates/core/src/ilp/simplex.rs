//! Dense two-phase tableau simplex for `max c.x` subject to linear rows and
//! `x >= 0`. Dantzig pricing, switching to Bland's rule on long degenerate runs.

use super::program::Cmp;
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const PHASE1_TOL: f64 = 1e-7;
const BLAND_AFTER: usize = 50;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone)]
pub(crate) struct LpRow {
    pub coefs: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
}

struct Tableau {
    m: usize,
    w: usize,
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    /// Columns allowed to enter.
    enterable: Vec<bool>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.w + c]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.w;
        let p = self.t[r * w + c];
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for v in prow.iter_mut() {
            *v /= p;
        }
        prow[c] = 1.0;
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(prow.iter()) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Runs pivots until no improving column remains.
    fn optimize(&mut self, tol: f64) -> Result<()> {
        let rhs = self.w - 1;
        let mut degenerate_run = 0usize;
        for _ in 0..MAX_PIVOTS {
            let bland = degenerate_run >= BLAND_AFTER;
            let mut enter = None;
            let mut best = tol;
            for j in 0..rhs {
                if !self.enterable[j] || self.obj[j] <= tol {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if self.obj[j] > best {
                    best = self.obj[j];
                    enter = Some(j);
                }
            }
            let Some(c) = enter else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.at(r, c);
                if a > PIVOT_TOL {
                    let ratio = self.at(r, rhs).max(0.0) / a;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Err(Error::Consistency("LP relaxation unbounded".into()));
            };
            if ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c);
        }
        Err(Error::Consistency("simplex pivot limit reached".into()))
    }
}

pub(crate) fn solve_lp(n: usize, obj: &[f64], rows: &[LpRow]) -> Result<LpOutcome> {
    // Normalize rows: unit max coefficient, nonnegative rhs.
    let mut norm: Vec<LpRow> = Vec::with_capacity(rows.len());
    for r in rows {
        let scale = r.coefs.iter().fold(0.0f64, |s, &(_, a)| s.max(a.abs()));
        if scale == 0.0 {
            let ok = match r.cmp {
                Cmp::Le => 0.0 <= r.rhs + PHASE1_TOL,
                Cmp::Ge => 0.0 >= r.rhs - PHASE1_TOL,
                Cmp::Eq => r.rhs.abs() <= PHASE1_TOL,
            };
            if !ok {
                return Ok(LpOutcome::Infeasible);
            }
            continue;
        }
        let mut coefs: Vec<(usize, f64)> = r.coefs.iter().map(|&(j, a)| (j, a / scale)).collect();
        let mut rhs = r.rhs / scale;
        let mut cmp = r.cmp;
        if rhs < 0.0 {
            for c in coefs.iter_mut() {
                c.1 = -c.1;
            }
            rhs = -rhs;
            cmp = match cmp {
                Cmp::Le => Cmp::Ge,
                Cmp::Ge => Cmp::Le,
                Cmp::Eq => Cmp::Eq,
            };
        }
        norm.push(LpRow { coefs, cmp, rhs });
    }
    let m = norm.len();
    let n_slack = norm.iter().filter(|r| r.cmp != Cmp::Eq).count();
    let n_art = norm.iter().filter(|r| r.cmp != Cmp::Le).count();
    let w = n + n_slack + n_art + 1;
    let rhs_col = w - 1;
    let mut tab = Tableau {
        m,
        w,
        t: vec![0.0; m * w],
        obj: vec![0.0; w],
        basis: vec![0; m],
        enterable: vec![true; w - 1],
    };
    let (mut s, mut a) = (n, n + n_slack);
    for (ri, r) in norm.iter().enumerate() {
        let row = &mut tab.t[ri * w..(ri + 1) * w];
        for &(j, v) in &r.coefs {
            row[j] += v;
        }
        row[rhs_col] = r.rhs;
        match r.cmp {
            Cmp::Le => {
                row[s] = 1.0;
                tab.basis[ri] = s;
                s += 1;
            }
            Cmp::Ge => {
                row[s] = -1.0;
                s += 1;
                row[a] = 1.0;
                tab.basis[ri] = a;
                a += 1;
            }
            Cmp::Eq => {
                row[a] = 1.0;
                tab.basis[ri] = a;
                a += 1;
            }
        }
    }
    let art_start = n + n_slack;
    for j in art_start..rhs_col {
        tab.enterable[j] = false;
    }

    if n_art > 0 {
        // Phase 1: maximize -(sum of artificials).
        for r in 0..m {
            if tab.basis[r] >= art_start {
                for j in 0..w {
                    if j < art_start || j == rhs_col {
                        tab.obj[j] += tab.t[r * w + j];
                    }
                }
            }
        }
        tab.optimize(1e-10)?;
        if tab.obj[rhs_col] > PHASE1_TOL {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] >= art_start {
                if let Some(j) = (0..art_start).find(|&j| tab.at(r, j).abs() > PIVOT_TOL) {
                    tab.pivot(r, j);
                }
            }
        }
    }

    // Phase 2.
    let cmax = obj.iter().fold(1.0f64, |s, c| s.max(c.abs()));
    tab.obj.iter_mut().for_each(|v| *v = 0.0);
    tab.obj[..n].copy_from_slice(obj);
    for r in 0..m {
        let b = tab.basis[r];
        let cb = if b < n { obj[b] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..w {
                tab.obj[j] -= cb * tab.t[r * w + j];
            }
        }
    }
    tab.optimize(1e-9 * cmax)?;

    let mut x = vec![0.0; n];
    for r in 0..m {
        let b = tab.basis[r];
        if b < n {
            x[b] = tab.at(r, rhs_col).max(0.0);
        }
    }
    let value = x.iter().zip(obj).map(|(a, b)| a * b).sum();
    Ok(LpOutcome::Optimal { x, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(coefs: &[(usize, f64)], cmp: Cmp, rhs: f64) -> LpRow {
        LpRow { coefs: coefs.to_vec(), cmp, rhs }
    }

    #[test]
    fn small_max() {
        // max 3x + 2y, x + y <= 4, x + 3y <= 6, x <= 3 -> (3, 1), value 11
        let rows = [row(&[(0, 1.0), (1, 1.0)], Cmp::Le, 4.0), row(&[(0, 1.0), (1, 3.0)], Cmp::Le, 6.0), row(&[(0, 1.0)], Cmp::Le, 3.0)];
        let LpOutcome::Optimal { x, value } = solve_lp(2, &[3.0, 2.0], &rows).unwrap() else { panic!() };
        assert!((value - 11.0).abs() < 1e-9);
        assert!((x[0] - 3.0).abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge() {
        // max -x - y, x + y = 2, x >= 0.5 -> value -2
        let rows = [row(&[(0, 1.0), (1, 1.0)], Cmp::Eq, 2.0), row(&[(0, 1.0)], Cmp::Ge, 0.5)];
        let LpOutcome::Optimal { x, value } = solve_lp(2, &[-1.0, -1.0], &rows).unwrap() else { panic!() };
        assert!((value + 2.0).abs() < 1e-9);
        assert!(x[0] >= 0.5 - 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        let rows = [row(&[(0, 1.0)], Cmp::Le, 1.0), row(&[(0, 1.0)], Cmp::Ge, 2.0)];
        assert!(matches!(solve_lp(1, &[1.0], &rows).unwrap(), LpOutcome::Infeasible));
    }

    #[test]
    fn negative_rhs_rows() {
        // -x <= -1 (x >= 1), x <= 2, min x -> 1
        let rows = [row(&[(0, -1.0)], Cmp::Le, -1.0), row(&[(0, 1.0)], Cmp::Le, 2.0)];
        let LpOutcome::Optimal { value, .. } = solve_lp(1, &[-1.0], &rows).unwrap() else { panic!() };
        assert!((value + 1.0).abs() < 1e-9);
    }
}
