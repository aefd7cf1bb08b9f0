use serde::{Deserialize, Serialize};

use super::assignment::MatchAssignment;
use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::stats::accurate_sum;

/// Pair-type counts: A = (1,1), B = (1,0), C = (0,1), D = (0,0) as
/// (treated outcome, control outcome).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairCounts {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

impl PairCounts {
    pub fn m(&self) -> usize {
        self.a + self.b + self.c + self.d
    }
    /// Discordant pairs B + C.
    pub fn discordant(&self) -> usize {
        self.b + self.c
    }
    /// B − C.
    pub fn te(&self) -> i64 {
        self.b as i64 - self.c as i64
    }
}

impl std::ops::Add for PairCounts {
    type Output = PairCounts;
    fn add(self, o: PairCounts) -> PairCounts {
        PairCounts { a: self.a + o.a, b: self.b + o.b, c: self.c + o.c, d: self.d + o.d }
    }
}

/// Mean and (population) standard deviation of the paired differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffStats {
    pub mean: f64,
    pub sd: f64,
    pub m: usize,
    /// Sum of squared differences.
    pub sum_sq: f64,
}

impl DiffStats {
    pub fn from_diffs(d: &[f64]) -> Result<DiffStats> {
        if d.is_empty() {
            return Err(Error::EmptyAssignment);
        }
        let m = d.len() as f64;
        let mean = accurate_sum(d.iter().copied()) / m;
        let sum_sq = accurate_sum(d.iter().map(|x| x * x));
        let var = (sum_sq / m - mean * mean).max(0.0);
        Ok(DiffStats { mean, sd: var.sqrt(), m: d.len(), sum_sq })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Evaluation {
    Counts(PairCounts),
    Diffs(DiffStats),
}

fn check(ds: &Dataset, a: &MatchAssignment) -> Result<()> {
    // Re-validate: the assignment may have been built against another dataset.
    MatchAssignment::new(a.pairs().to_vec(), ds.n_treated(), ds.n_control())?;
    Ok(())
}

pub fn pair_counts(ds: &Dataset, a: &MatchAssignment) -> Result<PairCounts> {
    if !ds.is_binary() {
        return Err(Error::OutcomeKind("binary"));
    }
    check(ds, a)?;
    let mut pc = PairCounts::default();
    for &(i, j) in a.pairs() {
        match (ds.yt(i) != 0.0, ds.yc(j) != 0.0) {
            (true, true) => pc.a += 1,
            (true, false) => pc.b += 1,
            (false, true) => pc.c += 1,
            (false, false) => pc.d += 1,
        }
    }
    Ok(pc)
}

pub fn diff_stats(ds: &Dataset, a: &MatchAssignment) -> Result<DiffStats> {
    check(ds, a)?;
    let d: Vec<f64> = a.pairs().iter().map(|&(i, j)| ds.yt(i) - ds.yc(j)).collect();
    DiffStats::from_diffs(&d)
}

pub fn evaluate_assignment(ds: &Dataset, a: &MatchAssignment) -> Result<Evaluation> {
    if a.is_empty() {
        return Err(Error::EmptyAssignment);
    }
    if ds.is_binary() {
        pair_counts(ds, a).map(Evaluation::Counts)
    } else {
        diff_stats(ds, a).map(Evaluation::Diffs)
    }
}
