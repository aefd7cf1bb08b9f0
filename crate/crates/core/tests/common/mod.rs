//! Brute-force oracles and instance generators shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robustmatch::model::{validate_dataset, CovValue, Dataset, MatchAssignment, RawOutcome, RawRecord};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Calls `f` on every injective partial map treated -> control whose pairs
/// all satisfy `ok`. Independent of the crate's enumerator.
pub fn all_assignments(nt: usize, nc: usize, ok: &dyn Fn(usize, usize) -> bool, f: &mut dyn FnMut(&MatchAssignment)) {
    fn go(
        i: usize,
        nt: usize,
        nc: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        ok: &dyn Fn(usize, usize) -> bool,
        f: &mut dyn FnMut(&MatchAssignment),
    ) {
        if i == nt {
            f(&MatchAssignment::new(cur.clone(), nt, nc).unwrap());
            return;
        }
        go(i + 1, nt, nc, used, cur, ok, f);
        for j in 0..nc {
            if !used[j] && ok(i, j) {
                used[j] = true;
                cur.push((i, j));
                go(i + 1, nt, nc, used, cur, ok, f);
                cur.pop();
                used[j] = false;
            }
        }
    }
    go(0, nt, nc, &mut vec![false; nc], &mut Vec::new(), ok, f);
}

/// Dataset with one numeric covariate `x` and one categorical `g`.
pub fn dataset_with_covs(yt: &[f64], yc: &[f64], xt: &[f64], xc: &[f64], gt: &[&str], gc: &[&str], binary: bool) -> Dataset {
    let mut recs = Vec::new();
    let out = |y: f64| if binary { RawOutcome::Binary(y != 0.0) } else { RawOutcome::Real(y) };
    for k in 0..yt.len() {
        recs.push(RawRecord {
            id: format!("t{k}"),
            treated: true,
            outcome: out(yt[k]),
            covariates: vec![CovValue::Num(xt[k]), CovValue::Cat(gt[k].to_string())],
        });
    }
    for k in 0..yc.len() {
        recs.push(RawRecord {
            id: format!("c{k}"),
            treated: false,
            outcome: out(yc[k]),
            covariates: vec![CovValue::Num(xc[k]), CovValue::Cat(gc[k].to_string())],
        });
    }
    validate_dataset(vec!["x".into(), "g".into()], recs).unwrap()
}

/// Random small dataset: binary or real outcomes, covariate x in [0, 1) and a
/// two-level group label.
pub fn random_dataset(r: &mut ChaCha8Rng, nt: usize, nc: usize, binary: bool) -> Dataset {
    let y = |r: &mut ChaCha8Rng| if binary { (r.random_bool(0.5)) as u8 as f64 } else { (r.random::<f64>() * 10.0 - 3.0).round() / 1.0 + r.random::<f64>() };
    let yt: Vec<f64> = (0..nt).map(|_| y(r)).collect();
    let yc: Vec<f64> = (0..nc).map(|_| y(r)).collect();
    let xt: Vec<f64> = (0..nt).map(|_| r.random()).collect();
    let xc: Vec<f64> = (0..nc).map(|_| r.random()).collect();
    let g = |r: &mut ChaCha8Rng| if r.random_bool(0.5) { "a" } else { "b" };
    let gt: Vec<&str> = (0..nt).map(|_| g(r)).collect();
    let gc: Vec<&str> = (0..nc).map(|_| g(r)).collect();
    dataset_with_covs(&yt, &yc, &xt, &xc, &gt, &gc, binary)
}

/// Standard normal CDF from the Maclaurin series of erf (|x| <= 6 is plenty
/// accurate for the values used in tests), written independently of the
/// crate's implementation.
pub fn phi_series(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    if z.abs() > 3.0 {
        // Continued fraction for erfc on the tail.
        let a = z.abs();
        let mut f = 0.0;
        for k in (1..200).rev() {
            f = (k as f64 / 2.0) / (a + f);
        }
        let erfc = (-a * a).exp() / std::f64::consts::PI.sqrt() / (a + f);
        return if z > 0.0 { 1.0 - 0.5 * erfc } else { 0.5 * erfc };
    }
    let mut term = z;
    let mut sum = z;
    for n in 1..200 {
        term *= -z * z / n as f64;
        sum += term / (2 * n + 1) as f64;
    }
    0.5 * (1.0 + 2.0 / std::f64::consts::PI.sqrt() * sum)
}

/// McNemar statistic straight from counts.
pub fn chi(b: i64, c: i64, plus_one: bool) -> f64 {
    let den = if plus_one { b + c + 1 } else { b + c };
    (b - c - 1) as f64 / (den as f64).sqrt()
}

/// Every `(A, B, C, D)` pair-count vector a full within-stratum matching of
/// `min(N_t, N_c)` pairs can realize on `(u, v, eta, nu)`.
pub fn stratum_pair_options(u: usize, v: usize, eta: usize, nu: usize) -> Vec<[usize; 4]> {
    let m = (u + v).min(eta + nu);
    let mut out = Vec::new();
    for a in 0..=m {
        for b in 0..=m - a {
            for c in 0..=m - a - b {
                let d = m - a - b - c;
                if a + b <= u && c + d <= v && a + c <= eta && b + d <= nu {
                    out.push([a, b, c, d]);
                }
            }
        }
    }
    out
}

/// Extremes of `(B - C - 1) / sqrt(B + C + 1)` over all full within-stratum
/// matchings, as `((te_min, sd_min), (te_max, sd_max))`.
pub fn brute_binned_extremes(strata: &[(usize, usize, usize, usize)]) -> ((i64, usize), (i64, usize)) {
    let opts: Vec<Vec<[usize; 4]>> = strata.iter().map(|&(u, v, e, n)| stratum_pair_options(u, v, e, n)).collect();
    let mut best_lo = (f64::INFINITY, (0i64, 0usize));
    let mut best_hi = (f64::NEG_INFINITY, (0i64, 0usize));
    fn go(l: usize, opts: &[Vec<[usize; 4]>], b: usize, c: usize, f: &mut dyn FnMut(usize, usize)) {
        if l == opts.len() {
            f(b, c);
            return;
        }
        for o in &opts[l] {
            go(l + 1, opts, b + o[1], c + o[2], f);
        }
    }
    go(0, &opts, 0, 0, &mut |b, c| {
        let x = chi(b as i64, c as i64, true);
        let key = (b as i64 - c as i64, b + c);
        if x < best_lo.0 {
            best_lo = (x, key);
        }
        if x > best_hi.0 {
            best_hi = (x, key);
        }
    });
    (best_lo.1, best_hi.1)
}

/// Every data-generating outcome of one stratum as `((u, v, eta, nu), prob)`.
pub fn stratum_outcomes(p: &robustmatch::nulldist::StratumParams) -> Vec<((usize, usize, usize, usize), f64)> {
    use robustmatch::nulldist::StratumParams;
    let bin = |k: usize, n: usize, q: f64| {
        let mut c = 1.0;
        for i in 0..k {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        c * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32)
    };
    let mut out = Vec::new();
    match *p {
        StratumParams::Sharp { n1, n0, e } => {
            for j in 0..=n1 {
                for k in 0..=n0 {
                    out.push(((j, k, n1 - j, n0 - k), bin(j, n1, e) * bin(k, n0, e)));
                }
            }
        }
        StratumParams::Conditional { nt, nc, pt, pc } => {
            for u in 0..=nt {
                for h in 0..=nc {
                    out.push(((u, nt - u, h, nc - h), bin(u, nt, pt) * bin(h, nc, pc)));
                }
            }
        }
    }
    out
}

/// Exact `(chi-, chi+)` law by enumerating every joint outcome of all strata
/// and brute-forcing both extremes. Keys are `((te_min, sd_min), (te_max, sd_max))`
/// mapped to exact statistic keys.
pub fn enumerate_range_pmf(
    params: &[robustmatch::nulldist::StratumParams],
) -> std::collections::BTreeMap<(robustmatch::nulldist::ChiKey, robustmatch::nulldist::ChiKey), f64> {
    use robustmatch::nulldist::ChiKey;
    let per: Vec<_> = params.iter().map(stratum_outcomes).collect();
    let mut out = std::collections::BTreeMap::new();
    fn go(
        l: usize,
        per: &[Vec<((usize, usize, usize, usize), f64)>],
        cur: &mut Vec<(usize, usize, usize, usize)>,
        p: f64,
        out: &mut std::collections::BTreeMap<(ChiKey, ChiKey), f64>,
    ) {
        if p == 0.0 {
            return;
        }
        if l == per.len() {
            let ((tl, sl), (th, sh)) = brute_binned_extremes(cur);
            *out.entry((ChiKey::new(tl, sl), ChiKey::new(th, sh))).or_insert(0.0) += p;
            return;
        }
        for &(c, q) in &per[l] {
            cur.push(c);
            go(l + 1, per, cur, p * q, out);
            cur.pop();
        }
    }
    go(0, &per, &mut Vec::new(), 1.0, &mut out);
    out
}

/// Random parameter sets with at most `max_total` units overall.
pub fn random_params(r: &mut ChaCha8Rng, sharp: bool, max_total: usize, max_strata: usize) -> Vec<robustmatch::nulldist::StratumParams> {
    use robustmatch::nulldist::StratumParams;
    let l = r.random_range(1..=max_strata);
    let mut left = max_total;
    let mut out = Vec::new();
    for k in 0..l {
        let remaining_strata = l - k;
        let cap = (left - (remaining_strata - 1) * 2).max(2);
        let n = r.random_range(2..=cap.min(left));
        left -= n;
        let prob = |r: &mut ChaCha8Rng| (r.random_range(1..=9) as f64) / 10.0;
        if sharp {
            let n1 = r.random_range(0..=n);
            out.push(StratumParams::sharp(n1, n - n1, prob(r)).unwrap());
        } else {
            let nt = r.random_range(1..n);
            let (pt, pc) = (prob(r), prob(r));
            out.push(StratumParams::conditional(nt, n - nt, pt, pc).unwrap());
        }
        if left < 2 {
            break;
        }
    }
    out
}

/// Random constraint instance over a dataset from [`random_dataset`], with
/// the constraint semantics restated here for the oracle.
pub struct Instance {
    pub ds: Dataset,
    pub cs: robustmatch::ConstraintSet,
    /// `|x_i - x_j| <= caliper`.
    pub caliper: Option<f64>,
    /// Pairs must share the group label.
    pub same_group: bool,
}

impl Instance {
    pub fn pair_ok(&self, i: usize, j: usize) -> bool {
        let t = self.ds.treated_unit(i);
        let c = self.ds.control_unit(j);
        let x = |u: &robustmatch::model::Unit| match &u.covariates[0] {
            CovValue::Num(v) => *v,
            _ => unreachable!(),
        };
        let g = |u: &robustmatch::model::Unit| u.covariates[1].clone();
        if self.same_group && g(t) != g(c) {
            return false;
        }
        self.caliper.is_none_or(|thr| (x(t) - x(c)).abs() <= thr)
    }

    /// Every admissible assignment.
    pub fn feasible(&self) -> Vec<MatchAssignment> {
        let mut out = Vec::new();
        all_assignments(self.ds.n_treated(), self.ds.n_control(), &|i, j| self.pair_ok(i, j), &mut |a| out.push(a.clone()));
        out
    }
}

pub fn random_instance(r: &mut ChaCha8Rng, binary: bool, max_t: usize, max_c: usize) -> Instance {
    use robustmatch::model::Caliper;
    let nt = r.random_range(2..=max_t);
    let nc = r.random_range(2..=max_c);
    let ds = random_dataset(r, nt, nc, binary);
    let caliper = r.random_bool(0.6).then(|| (r.random_range(2..=10) as f64) / 10.0);
    let same_group = r.random_bool(0.3);
    let mut cs = robustmatch::ConstraintSet::default();
    if caliper.is_some() || same_group {
        let mut weights = std::collections::BTreeMap::new();
        weights.insert("x".to_string(), if caliper.is_some() { 1.0 } else { 0.0 });
        if same_group {
            weights.insert("g".to_string(), 1.0);
        }
        cs.caliper = Some(Caliper::WeightedL1 { weights, threshold: caliper.unwrap_or(0.0) });
    }
    Instance { ds, cs, caliper, same_group }
}

/// Population-sd z of an assignment; `None` when the variance vanishes.
pub fn z_of_assignment(ds: &Dataset, a: &MatchAssignment) -> Option<f64> {
    let d: Vec<f64> = a.pairs().iter().map(|&(i, j)| ds.yt(i) - ds.yc(j)).collect();
    let m = d.len() as f64;
    if d.len() < 2 {
        return None;
    }
    let mean = d.iter().sum::<f64>() / m;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
    (var > 1e-12).then(|| mean * m.sqrt() / var.sqrt())
}

/// `(B, C)` of an assignment on binary data.
pub fn bc_of(ds: &Dataset, a: &MatchAssignment) -> (i64, i64) {
    let mut b = 0;
    let mut c = 0;
    for &(i, j) in a.pairs() {
        match (ds.yt(i) as u8, ds.yc(j) as u8) {
            (1, 0) => b += 1,
            (0, 1) => c += 1,
            _ => {}
        }
    }
    (b, c)
}

/// Two-sided normal p-value of a single statistic value.
pub fn two_sided(x: f64) -> f64 {
    (2.0 * phi_series(x).min(1.0 - phi_series(x))).min(1.0)
}
