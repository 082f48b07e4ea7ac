use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use odocal::fgo::FgoConfig;
use odocal::harness::calibrate;
use odocal::parallel;
use odocal::simulator::{generate, Dataset, Scenario};
use odocal::validation::factor_jacobians;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Short calibration runs, one per seed, as in a Monte-Carlo batch.
fn calibration_batch(c: &mut Criterion) {
    let datasets: Vec<Dataset> = (1..=4).map(|s| generate(&Scenario::calibration_only(s)).unwrap()).collect();
    let cfg = FgoConfig { t_end: Some(30.0), ..FgoConfig::default() };
    let run = |d: &Dataset| calibrate(d, &cfg).unwrap().records.len();
    let mut g = c.benchmark_group("calibration_batch");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("parallel", datasets.len()), |b| b.iter(|| parallel::map(black_box(&datasets), run)));
    g.bench_function(BenchmarkId::new("sequential", datasets.len()), |b| {
        b.iter(|| parallel::map_sequential(black_box(&datasets), run))
    });
    g.finish();
}

fn jacobian_checks(c: &mut Criterion) {
    let seeds: Vec<u64> = (0..32).collect();
    let check = |s: &u64| factor_jacobians(&mut ChaCha8Rng::seed_from_u64(*s), 1);
    let mut g = c.benchmark_group("jacobian_checks");
    g.bench_function(BenchmarkId::new("parallel", seeds.len()), |b| b.iter(|| parallel::map(black_box(&seeds), check)));
    g.bench_function(BenchmarkId::new("sequential", seeds.len()), |b| {
        b.iter(|| parallel::map_sequential(black_box(&seeds), check))
    });
    g.finish();
}

criterion_group!(benches, calibration_batch, jacobian_checks);
criterion_main!(benches);
