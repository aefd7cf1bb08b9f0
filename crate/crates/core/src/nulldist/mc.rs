use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use super::{ChiKey, RangePmf, StratumParams};
use crate::error::{invalid, Result};
use crate::ilp::Sense;
use crate::mcnemar::binned_extreme;
use crate::model::{PairCounts, StratumCounts};

const CHUNK: usize = 4096;

fn binomial(n: usize, p: f64, rng: &mut ChaCha8Rng) -> usize {
    Binomial::new(n as u64, p).expect("p validated in [0, 1]").sample(rng) as usize
}

fn draw(params: &[StratumParams], rng: &mut ChaCha8Rng) -> Vec<StratumCounts> {
    params
        .iter()
        .map(|p| match *p {
            StratumParams::Sharp { n1, n0, e } => {
                let u = binomial(n1, e, rng);
                let v = binomial(n0, e, rng);
                StratumCounts::new(u, v, n1 - u, n0 - v)
            }
            StratumParams::Conditional { nt, nc, pt, pc } => {
                let u = binomial(nt, pt, rng);
                let eta = binomial(nc, pc, rng);
                StratumCounts::new(u, nt - u, eta, nc - eta)
            }
        })
        .collect()
}

fn key(counts: &[StratumCounts], sense: Sense) -> ChiKey {
    let pc = binned_extreme(counts, sense).into_iter().fold(PairCounts::default(), |a, b| a + b);
    ChiKey::new(pc.te(), pc.discordant())
}

/// Empirical `(chi-, chi+)` frequencies over `n_draws` datasets drawn from the
/// regime's data-generating process. Draws are split into fixed chunks, each
/// with its own ChaCha8 stream, so the result depends only on `seed`.
pub fn mc_sample_distribution(params: &[StratumParams], n_draws: usize, seed: u64) -> Result<RangePmf> {
    if n_draws == 0 {
        return invalid("n_draws must be at least 1");
    }
    for p in params {
        p.validate()?;
    }
    let chunks = n_draws.div_ceil(CHUNK);
    let partial: Vec<BTreeMap<(ChiKey, ChiKey), usize>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut m = BTreeMap::new();
            for _ in (c * CHUNK)..((c + 1) * CHUNK).min(n_draws) {
                let counts = draw(params, &mut rng);
                *m.entry((key(&counts, Sense::Min), key(&counts, Sense::Max))).or_default() += 1;
            }
            m
        })
        .collect();
    let mut total: BTreeMap<(ChiKey, ChiKey), f64> = BTreeMap::new();
    for m in partial {
        for (k, n) in m {
            *total.entry(k).or_default() += n as f64;
        }
    }
    total.values_mut().for_each(|v| *v /= n_draws as f64);
    Ok(RangePmf::from_keys(total, None))
}

/// Total-variation distance between two pmfs on `(chi-, chi+)`.
pub fn tv_distance(a: &RangePmf, b: &RangePmf) -> f64 {
    let mut diff: BTreeMap<(ChiKey, ChiKey), f64> = BTreeMap::new();
    for x in &a.atoms {
        *diff.entry((x.s_key, x.r_key)).or_default() += x.mass;
    }
    for x in &b.atoms {
        *diff.entry((x.s_key, x.r_key)).or_default() -= x.mass;
    }
    0.5 * diff.values().map(|v| v.abs()).sum::<f64>()
}
