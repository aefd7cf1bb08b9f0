//! Small numeric helpers shared by the test statistics and the null distributions.

use libm::erfc;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Compensated (Neumaier) sum; the error is a couple of ulps of the result
/// rather than growing with the number of terms.
pub fn accurate_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// Two-sided conservative p-value from a pair of extremal statistics:
/// `min(1, 2 * min(F(hi), 1 - F(lo)))` with `F` the standard normal CDF.
pub fn conservative_pvalue(hi: f64, lo: f64) -> f64 {
    let lower = normal_cdf(hi);
    let upper = normal_cdf(-lo);
    (2.0 * lower.min(upper)).min(1.0)
}

/// Binomial pmf, exact enough for n ≤ 64. `p` in [0, 1]; `0^0 = 1`.
pub fn binom_pmf(k: usize, n: usize, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    binom_coef(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

pub fn binom_coef(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0f64;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
