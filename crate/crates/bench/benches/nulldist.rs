use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use robustmatch::nulldist::{exact_range_pmf, mc_sample_distribution, ConvMethod};
use robustmatch_bench::{conditional_strata, sharp_strata};

fn exact(c: &mut Criterion) {
    let mut g = c.benchmark_group("exact_range_pmf");
    g.sample_size(10);
    for l in [4usize, 8, 12] {
        let params = sharp_strata(l, 4, l as u64);
        for method in [ConvMethod::Direct, ConvMethod::Fft] {
            g.bench_with_input(BenchmarkId::new(format!("sharp_{method:?}"), l), &params, |b, p| {
                b.iter(|| exact_range_pmf(p, method).unwrap())
            });
        }
    }
    let params = conditional_strata(10, 3, 5, 7);
    g.bench_function("conditional_fft_10", |b| b.iter(|| exact_range_pmf(&params, ConvMethod::Fft).unwrap()));
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let params = sharp_strata(10, 6, 1);
    let mut g = c.benchmark_group("mc_sample_distribution");
    g.sample_size(10);
    g.bench_function("sharp_10x6_1e4", |b| b.iter(|| mc_sample_distribution(&params, 10_000, 3).unwrap()));
    g.finish();
}

criterion_group!(benches, exact, monte_carlo);
criterion_main!(benches);
