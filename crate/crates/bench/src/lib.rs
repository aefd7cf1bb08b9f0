//! Seeded fixtures shared by the benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robustmatch::model::{validate_dataset, CovValue, RawOutcome, RawRecord};
use robustmatch::nulldist::StratumParams;
use robustmatch::Dataset;

/// `nt` treated and `nc` control units with a uniform covariate `x`.
pub fn dataset(nt: usize, nc: usize, binary: bool, seed: u64) -> Dataset {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let recs = (0..nt + nc)
        .map(|k| {
            let treated = k < nt;
            let outcome = if binary {
                RawOutcome::Binary(r.random_bool(if treated { 0.6 } else { 0.4 }))
            } else {
                RawOutcome::Real(r.random::<f64>() * 4.0 + if treated { 1.0 } else { 0.0 })
            };
            RawRecord { id: format!("u{k}"), treated, outcome, covariates: vec![CovValue::Num(r.random())] }
        })
        .collect();
    validate_dataset(vec!["x".into()], recs).expect("fixture is valid")
}

/// `l` sharp-regime strata of `size` units each with random outcome counts.
pub fn sharp_strata(l: usize, size: usize, seed: u64) -> Vec<StratumParams> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..l)
        .map(|_| {
            let n1 = r.random_range(0..=size);
            StratumParams::sharp(n1, size - n1, r.random_range(0.2..0.8)).expect("valid parameters")
        })
        .collect()
}

/// `l` conditional-regime strata with `nt` treated and `nc` control units.
pub fn conditional_strata(l: usize, nt: usize, nc: usize, seed: u64) -> Vec<StratumParams> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..l)
        .map(|_| StratumParams::conditional(nt, nc, r.random(), r.random()).expect("valid parameters"))
        .collect()
}
