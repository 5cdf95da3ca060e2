use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use iltlab_core::par::{map_indices_seq, sample_stats, sample_stats_seq, StreamKey};
use iltlab_core::sampler::{sample_bm_with, TimeGrid};
use iltlab_core::simplex::{mass_m, QuadratureSpec};
use iltlab_core::Point;
use rand::Rng;

fn kernel_average(c: &mut Criterion) {
    let grid = TimeGrid::through(&[0.2, 0.7]).unwrap();
    let (a, b) = (grid.index_of(0.2).unwrap(), grid.index_of(0.7).unwrap());
    let f = |rng: &mut iltlab_core::par::Rng, _i: u64| {
        let w = sample_bm_with(&grid, 4, rng);
        let r2: f64 = w.increment(a, b).iter().enumerate().map(|(j, x)| (x - if j == 0 { 1.0 } else { 0.0 }).powi(2)).sum();
        (-r2 / 0.04).exp()
    };
    let key = StreamKey::new(1);
    let mut g = c.benchmark_group("sample_stats");
    for n in [10_000usize, 100_000] {
        g.bench_with_input(BenchmarkId::new("parallel", n), &n, |bch, &n| bch.iter(|| sample_stats(&key, n, f)));
        g.bench_with_input(BenchmarkId::new("sequential", n), &n, |bch, &n| bch.iter(|| sample_stats_seq(&key, n, f)));
    }
    g.finish();
}

fn mass_grid(c: &mut Criterion) {
    let norms: Vec<f64> = (0..16).map(|i| 0.25 + 0.25 * i as f64).collect();
    let q = QuadratureSpec::tensor(1e-10);
    let run = |i: usize| mass_m(&Point::e1(4).scaled(norms[i]), 4, &q).unwrap();
    let mut g = c.benchmark_group("mass_grid");
    #[cfg(feature = "parallel")]
    g.bench_function("parallel", |b| b.iter(|| iltlab_core::par::map_indices_par(norms.len(), run)));
    g.bench_function("sequential", |b| b.iter(|| map_indices_seq(norms.len(), run)));
    g.finish();
}

fn uniform_sum(c: &mut Criterion) {
    let key = StreamKey::new(3);
    let f = |rng: &mut iltlab_core::par::Rng, _i: u64| rng.random::<f64>();
    let mut g = c.benchmark_group("rng_streams");
    g.bench_function("parallel", |b| b.iter(|| sample_stats(&key, 200_000, f)));
    g.bench_function("sequential", |b| b.iter(|| sample_stats_seq(&key, 200_000, f)));
    g.finish();
}

criterion_group!(benches, kernel_average, mass_grid, uniform_sum);
criterion_main!(benches);
