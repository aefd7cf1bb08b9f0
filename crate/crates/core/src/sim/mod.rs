//! Simulation harness: stratified binary data-generating processes, the
//! subsample-selection baselines and the robust McNemar test on the same data.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mcnemar::{mcnemar_pvalue, mcnemar_stat, robust_mcnemar_binned, Convention};
use crate::model::{
    pair_counts, stratify, validate_dataset, BinningSpec, CovValue, Dataset, MatchAssignment, RawOutcome, RawRecord,
    Stratification,
};
use crate::stats::median;

pub const STRATUM_COVARIATE: &str = "stratum";
pub const TREATMENT_PROB: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// 1: perfectly stratified; 2: outcome noise shared by both potential
    /// outcomes of a unit, scaled by `delta`.
    pub scenario: u8,
    pub n: usize,
    pub satt_present: bool,
    pub delta: f64,
    pub n_replications: usize,
    pub seed: u64,
    #[serde(default = "default_stratum_size")]
    pub stratum_size: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_stratum_size() -> usize {
    9
}

fn default_alpha() -> f64 {
    0.05
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scenario: 1,
            n: 1350,
            satt_present: false,
            delta: 0.0,
            n_replications: 100,
            seed: 0,
            stratum_size: default_stratum_size(),
            alpha: default_alpha(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenario != 1 && self.scenario != 2 {
            return invalid(format!("scenario must be 1 or 2, got {}", self.scenario));
        }
        if self.stratum_size == 0 || self.n == 0 || self.n % self.stratum_size != 0 {
            return invalid(format!("N={} must be a positive multiple of the stratum size {}", self.n, self.stratum_size));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return invalid(format!("delta must lie in [0, 1], got {}", self.delta));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        Ok(())
    }

    pub fn n_strata(&self) -> usize {
        self.n / self.stratum_size
    }
}

/// What an RNG stream is used for within one replication.
#[derive(Debug, Clone, Copy)]
enum Purpose {
    Data = 0,
    LargestFirst = 1,
    SmallestFirst = 2,
    Random = 3,
}

/// Stream 0 is reserved for quantities fixed across replications.
fn stream(seed: u64, replication: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream((replication as u64 + 1) * 4 + purpose as u64);
    r
}

fn beta(a: f64, b: f64, r: &mut ChaCha8Rng) -> f64 {
    Beta::new(a, b).expect("positive shape parameters").sample(r)
}

/// Per-stratum outcome probabilities and per-unit noise.
struct StratumDraw {
    pt: f64,
    pc: f64,
    eps: Vec<f64>,
}

fn draw_stratum(size: usize, r: &mut ChaCha8Rng) -> StratumDraw {
    let pt = beta(5.0, 0.5, r);
    let pc = beta(0.5, 0.5, r);
    let (lo, hi) = (-pt.min(pc), 1.0 - pt.max(pc));
    let eps = (0..size).map(|_| if hi > lo { r.random_range(lo..hi) } else { lo }).collect();
    StratumDraw { pt, pc, eps }
}

/// Simulated dataset for one replication and its exact stratification on the
/// `stratum` covariate.
pub fn generate_dataset(cfg: &SimConfig, replication: usize) -> Result<(Dataset, Stratification)> {
    cfg.validate()?;
    let size = cfg.stratum_size;
    let mut r = stream(cfg.seed, replication, Purpose::Data);
    let fixed: Option<Vec<StratumDraw>> = (cfg.scenario == 2).then(|| {
        let mut r0 = ChaCha8Rng::seed_from_u64(cfg.seed);
        r0.set_stream(0);
        (0..cfg.n_strata()).map(|_| draw_stratum(size, &mut r0)).collect()
    });
    let mut records = Vec::with_capacity(cfg.n);
    for l in 0..cfg.n_strata() {
        let (p1, p0): (Vec<f64>, Vec<f64>) = match &fixed {
            None => {
                let pt = beta(5.0, 0.5, &mut r);
                let pc = if cfg.satt_present { beta(0.5, 0.5, &mut r) } else { pt };
                (vec![pt; size], vec![pc; size])
            }
            Some(f) => {
                let s = &f[l];
                let base_c = if cfg.satt_present { s.pc } else { s.pt };
                let clamp = |x: f64| x.clamp(0.0, 1.0);
                (
                    s.eps.iter().map(|e| clamp(s.pt + cfg.delta * e)).collect(),
                    s.eps.iter().map(|e| clamp(base_c + cfg.delta * e)).collect(),
                )
            }
        };
        for k in 0..size {
            let y1 = r.random_bool(p1[k]);
            let y0 = r.random_bool(p0[k]);
            let t = r.random_bool(TREATMENT_PROB);
            records.push(RawRecord {
                id: format!("u{}", l * size + k),
                treated: t,
                outcome: RawOutcome::Binary(if t { y1 } else { y0 }),
                covariates: vec![CovValue::Cat(format!("s{l:05}"))],
            });
        }
    }
    let ds = validate_dataset(vec![STRATUM_COVARIATE.to_string()], records)?;
    let strat = stratify(&ds, &BinningSpec::exact(STRATUM_COVARIATE))?;
    Ok((ds, strat))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    LargestFirst,
    SmallestFirst,
    Random,
}

impl Heuristic {
    pub const ALL: [Heuristic; 3] = [Heuristic::LargestFirst, Heuristic::SmallestFirst, Heuristic::Random];
}

impl std::str::FromStr for Heuristic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "largest_first" => Ok(Heuristic::LargestFirst),
            "smallest_first" => Ok(Heuristic::SmallestFirst),
            "random" => Ok(Heuristic::Random),
            _ => invalid(format!("unknown heuristic {s:?}")),
        }
    }
}

fn select(ds: &Dataset, strat: &Stratification, mode: Heuristic, rng: &mut ChaCha8Rng, lenient: bool) -> Result<MatchAssignment> {
    if !strat.binary {
        return Err(Error::OutcomeKind("binary"));
    }
    let mut pairs = Vec::new();
    for (l, s) in strat.strata.iter().enumerate() {
        let mut treated = s.treated.clone();
        if treated.len() > s.control.len() {
            if !lenient {
                return Err(Error::Infeasible(format!(
                    "stratum {l} has {} treated and {} control units",
                    treated.len(),
                    s.control.len()
                )));
            }
            treated.shuffle(rng);
            treated.truncate(s.control.len());
        }
        // Shuffling before the stable sort breaks outcome ties at random.
        let mut controls = s.control.clone();
        controls.shuffle(rng);
        match mode {
            Heuristic::LargestFirst => controls.sort_by(|&a, &b| ds.yc(b).total_cmp(&ds.yc(a))),
            Heuristic::SmallestFirst => controls.sort_by(|&a, &b| ds.yc(a).total_cmp(&ds.yc(b))),
            Heuristic::Random => {}
        }
        controls.truncate(treated.len());
        treated.shuffle(rng);
        pairs.extend(treated.into_iter().zip(controls));
    }
    MatchAssignment::new(pairs, ds.n_treated(), ds.n_control())
}

/// Matches every treated unit to a control of its stratum chosen by `mode`,
/// pairing uniformly at random within the stratum.
pub fn baseline_heuristic(ds: &Dataset, strat: &Stratification, mode: Heuristic, seed: u64) -> Result<MatchAssignment> {
    select(ds, strat, mode, &mut ChaCha8Rng::seed_from_u64(seed), false)
}

/// Two-sided normal-approximation McNemar p-value of one matched set under the
/// `sqrt(B + C + 1)` convention.
pub fn baseline_pvalue(ds: &Dataset, a: &MatchAssignment) -> Result<f64> {
    let chi = mcnemar_stat(&pair_counts(ds, a)?, Convention::SqrtMPlus1)?;
    Ok(mcnemar_pvalue(chi, chi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LargestFirst,
    SmallestFirst,
    Random,
    Robust,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::LargestFirst, Method::SmallestFirst, Method::Random, Method::Robust];

    pub fn name(self) -> &'static str {
        match self {
            Method::LargestFirst => "largest_first",
            Method::SmallestFirst => "smallest_first",
            Method::Random => "random",
            Method::Robust => "robust",
        }
    }
}

impl From<Heuristic> for Method {
    fn from(h: Heuristic) -> Self {
        match h {
            Heuristic::LargestFirst => Method::LargestFirst,
            Heuristic::SmallestFirst => Method::SmallestFirst,
            Heuristic::Random => Method::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueRow {
    pub replication: usize,
    pub method: Method,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n: usize,
    pub rejection_rate: Option<f64>,
    pub median_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: SimConfig,
    pub rows: Vec<PValueRow>,
    pub summary: Vec<MethodSummary>,
    /// Replications whose draw had no treated or no control units.
    pub skipped: Vec<usize>,
}

impl ExperimentReport {
    pub fn summary_of(&self, m: Method) -> &MethodSummary {
        self.summary.iter().find(|s| s.method == m).expect("every method is summarized")
    }
}

fn replicate(cfg: &SimConfig, rep: usize) -> Result<Option<Vec<PValueRow>>> {
    let (ds, strat) = match generate_dataset(cfg, rep) {
        Ok(x) => x,
        Err(Error::NoTreated | Error::NoControl) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut rows = Vec::with_capacity(4);
    for (h, purpose) in Heuristic::ALL.into_iter().zip([Purpose::LargestFirst, Purpose::SmallestFirst, Purpose::Random]) {
        let a = select(&ds, &strat, h, &mut stream(cfg.seed, rep, purpose), true)?;
        rows.push(PValueRow { replication: rep, method: h.into(), p_value: baseline_pvalue(&ds, &a)? });
    }
    let robust = robust_mcnemar_binned(&strat)?;
    rows.push(PValueRow { replication: rep, method: Method::Robust, p_value: robust.p_value });
    Ok(Some(rows))
}

/// Runs all replications (in parallel) and aggregates rejection rates at
/// `cfg.alpha`. The report depends only on `cfg`.
pub fn run_experiment(cfg: &SimConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let per: Vec<Result<Option<Vec<PValueRow>>>> =
        (0..cfg.n_replications).into_par_iter().map(|rep| replicate(cfg, rep)).collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (rep, r) in per.into_iter().enumerate() {
        match r? {
            Some(v) => rows.extend(v),
            None => skipped.push(rep),
        }
    }
    let mut by: BTreeMap<Method, Vec<f64>> = Method::ALL.iter().map(|&m| (m, Vec::new())).collect();
    for r in &rows {
        by.get_mut(&r.method).unwrap().push(r.p_value);
    }
    let summary = by
        .into_iter()
        .map(|(method, ps)| MethodSummary {
            method,
            n: ps.len(),
            rejection_rate: (!ps.is_empty())
                .then(|| ps.iter().filter(|&&p| p < cfg.alpha).count() as f64 / ps.len() as f64),
            median_p: median(&ps),
        })
        .collect();
    Ok(ExperimentReport { config: cfg.clone(), rows, summary, skipped })
}
