use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest padded FFT grid (complex cells) a convolution may allocate.
pub const MAX_FFT_CELLS: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvMethod {
    Direct,
    Fft,
}

impl std::str::FromStr for ConvMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(ConvMethod::Direct),
            "fft" => Ok(ConvMethod::Fft),
            _ => invalid(format!("unknown convolution method {s:?} (expected direct or fft)")),
        }
    }
}

/// Dense table over `(TE-, SD-, TE+, SD+)` with `TE` in `-k..=k` and `SD` in
/// `0..=k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table4 {
    pub k: usize,
    data: Vec<f64>,
}

impl Table4 {
    pub fn zeros(k: usize) -> Self {
        let w = 2 * k + 1;
        let h = k + 1;
        Table4 { k, data: vec![0.0; w * h * w * h] }
    }

    /// Point mass at the origin.
    pub fn delta() -> Self {
        Table4 { k: 0, data: vec![1.0] }
    }

    pub fn dims(&self) -> [usize; 4] {
        [2 * self.k + 1, self.k + 1, 2 * self.k + 1, self.k + 1]
    }

    fn index(&self, te_m: i64, sd_m: usize, te_p: i64, sd_p: usize) -> Option<usize> {
        let k = self.k as i64;
        if te_m.abs() > k || te_p.abs() > k || sd_m > self.k || sd_p > self.k {
            return None;
        }
        let [_, d1, d2, d3] = self.dims();
        Some((((te_m + k) as usize * d1 + sd_m) * d2 + (te_p + k) as usize) * d3 + sd_p)
    }

    fn coords(&self, idx: usize) -> (i64, usize, i64, usize) {
        let [_, d1, d2, d3] = self.dims();
        let k = self.k as i64;
        let sd_p = idx % d3;
        let r = idx / d3;
        let te_p = (r % d2) as i64 - k;
        let r = r / d2;
        (r as i64 / d1 as i64 - k, r % d1, te_p, sd_p)
    }

    pub fn get(&self, te_m: i64, sd_m: usize, te_p: i64, sd_p: usize) -> f64 {
        self.index(te_m, sd_m, te_p, sd_p).map_or(0.0, |i| self.data[i])
    }

    /// Panics when the cell lies outside the table.
    pub fn add(&mut self, te_m: i64, sd_m: usize, te_p: i64, sd_p: usize, p: f64) {
        let i = self
            .index(te_m, sd_m, te_p, sd_p)
            .unwrap_or_else(|| panic!("cell ({te_m}, {sd_m}, {te_p}, {sd_p}) outside table of bound {}", self.k));
        self.data[i] += p;
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn cells(&self) -> usize {
        self.data.len()
    }

    /// Nonzero cells as `((TE-, SD-, TE+, SD+), mass)`.
    pub fn nonzeros(&self) -> impl Iterator<Item = ((i64, usize, i64, usize), f64)> + '_ {
        self.data.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, &v)| (self.coords(i), v))
    }

    pub fn retain(&mut self, keep: impl Fn(i64, usize, i64, usize) -> bool) {
        for i in 0..self.data.len() {
            if self.data[i] != 0.0 {
                let (a, b, c, d) = self.coords(i);
                if !keep(a, b, c, d) {
                    self.data[i] = 0.0;
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &Table4) -> Result<()> {
        if other.k > self.k {
            let mut grown = Table4::zeros(other.k);
            grown.add_assign(self)?;
            *self = grown;
        }
        for ((a, b, c, d), v) in other.nonzeros() {
            self.add(a, b, c, d, v);
        }
        Ok(())
    }

    /// Largest absolute cellwise difference; tables may have different bounds.
    pub fn max_abs_diff(&self, other: &Table4) -> f64 {
        let (big, small) = if self.k >= other.k { (self, other) } else { (other, self) };
        let mut worst: f64 = 0.0;
        for (i, &v) in big.data.iter().enumerate() {
            let (a, b, c, d) = big.coords(i);
            worst = worst.max((v - small.get(a, b, c, d)).abs());
        }
        worst
    }

    /// Direct convolution over the nonzero cells of both tables.
    pub fn convolve_direct(&self, other: &Table4) -> Table4 {
        let mut out = Table4::zeros(self.k + other.k);
        let rhs: Vec<_> = other.nonzeros().collect();
        for ((a, b, c, d), v) in self.nonzeros() {
            for &((a2, b2, c2, d2), w) in &rhs {
                out.add(a + a2, b + b2, c + c2, d + d2, v * w);
            }
        }
        out
    }
}

/// Sum-of-independent-strata pmf of per-stratum tables, in stratum order.
pub fn convolve_strata(tables: &[Table4], method: ConvMethod) -> Result<Table4> {
    let Some(first) = tables.first() else {
        return invalid("no tables to convolve");
    };
    match method {
        ConvMethod::Direct => Ok(tables[1..].iter().fold(first.clone(), |acc, t| acc.convolve_direct(t))),
        ConvMethod::Fft if tables.len() == 1 => Ok(first.clone()),
        ConvMethod::Fft => convolve_fft(tables),
    }
}

struct Fft4 {
    dims: [usize; 4],
    planner: FftPlanner<f64>,
}

impl Fft4 {
    fn transform(&mut self, data: &mut [Complex<f64>], inverse: bool) {
        let dims = self.dims;
        for axis in 0..4 {
            let n = dims[axis];
            if n == 1 {
                continue;
            }
            let fft = if inverse { self.planner.plan_fft_inverse(n) } else { self.planner.plan_fft_forward(n) };
            let stride: usize = dims[axis + 1..].iter().product();
            let outer: usize = dims[..axis].iter().product();
            let mut line = vec![Complex::default(); n];
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for (t, x) in line.iter_mut().enumerate() {
                        *x = data[base + t * stride];
                    }
                    fft.process(&mut line);
                    for (t, x) in line.iter().enumerate() {
                        data[base + t * stride] = *x;
                    }
                }
            }
        }
    }
}

/// Row-column FFT convolution. Each axis is zero-padded to the output extent
/// rounded up to a power of two. Round-off below `1e-13` and negative cells
/// are zeroed and the result renormalized.
fn convolve_fft(tables: &[Table4]) -> Result<Table4> {
    let k: usize = tables.iter().map(|t| t.k).sum();
    let target = [2 * k + 1, k + 1, 2 * k + 1, k + 1];
    let dims = target.map(usize::next_power_of_two);
    let cells: usize = dims.iter().product();
    if cells > MAX_FFT_CELLS {
        return invalid(format!("FFT grid of {cells} cells exceeds the bound {MAX_FFT_CELLS}; use the direct method"));
    }
    let mut f = Fft4 { dims, planner: FftPlanner::new() };
    let flat = |i: [usize; 4]| ((i[0] * dims[1] + i[1]) * dims[2] + i[2]) * dims[3] + i[3];
    let mut acc: Option<Vec<Complex<f64>>> = None;
    for t in tables {
        let mut buf = vec![Complex::default(); cells];
        let kk = t.k as i64;
        for ((a, b, c, d), v) in t.nonzeros() {
            buf[flat([(a + kk) as usize, b, (c + kk) as usize, d])] = Complex::new(v, 0.0);
        }
        f.transform(&mut buf, false);
        acc = Some(match acc {
            None => buf,
            Some(mut a) => {
                a.iter_mut().zip(&buf).for_each(|(x, y)| *x *= *y);
                a
            }
        });
    }
    let mut spec = acc.expect("at least two tables");
    f.transform(&mut spec, true);
    let scale = 1.0 / cells as f64;
    let mut out = Table4::zeros(k);
    let ki = k as i64;
    let mut worst_negative: f64 = 0.0;
    for a in 0..target[0] {
        for b in 0..target[1] {
            for c in 0..target[2] {
                for d in 0..target[3] {
                    let v = spec[flat([a, b, c, d])].re * scale;
                    worst_negative = worst_negative.min(v);
                    if v >= 1e-13 {
                        out.add(a as i64 - ki, b, c as i64 - ki, d, v);
                    }
                }
            }
        }
    }
    if worst_negative < -1e-12 {
        log::warn!("FFT convolution produced a cell of {worst_negative:e}; zeroed");
    }
    let total = out.total();
    if !(total > 0.0) {
        return Err(Error::Consistency("FFT convolution lost all mass".into()));
    }
    log::debug!("FFT convolution renormalized by {:e}", 1.0 / total);
    out.data.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}
