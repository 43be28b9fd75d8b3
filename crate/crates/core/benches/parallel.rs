//! Data-parallel core versus its sequential fallback.
//!
//! Each workload runs once inside a one-thread rayon pool and once inside a
//! pool with every available core. The outputs are identical by
//! construction; only wall time differs. Building with
//! `--no-default-features` removes rayon entirely and matches the
//! one-thread numbers up to scheduling overhead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use holodyn::dynsys::RationalMap;
use holodyn::greenmeas::{default_seed, preimage_tree, sample_backward, tube_battery};
use holodyn::percyc::{find_periodic, Backend, PeriodicOptions};
use num_complex::Complex64;
use rayon::ThreadPoolBuilder;

fn pools() -> Vec<(usize, rayon::ThreadPool)> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut sizes = vec![1];
    if all > 1 {
        sizes.push(all);
    }
    sizes
        .into_iter()
        .map(|t| (t, ThreadPoolBuilder::new().num_threads(t).build().unwrap()))
        .collect()
}

fn bench(c: &mut Criterion) {
    let basilica = RationalMap::unicritical(2, Complex64::new(-1.0, 0.0), 128).unwrap();
    let fast = basilica.to_f64();
    let base = default_seed(&fast);
    let sample = sample_backward(&fast, &base, 64, 50_000, 1);

    let mut group = c.benchmark_group("parallel");
    group.sample_size(10);
    for (threads, pool) in pools() {
        group.bench_with_input(BenchmarkId::new("backward_sample_50k", threads), &threads, |b, _| {
            b.iter(|| pool.install(|| sample_backward(&fast, &base, 64, 50_000, 7)))
        });
        group.bench_with_input(BenchmarkId::new("preimage_tree_depth16", threads), &threads, |b, _| {
            b.iter(|| pool.install(|| preimage_tree(&fast, &base, 16, 1 << 20).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("newton_periodic_n8", threads), &threads, |b, _| {
            b.iter(|| {
                pool.install(|| {
                    find_periodic(&basilica, 8, Backend::NewtonSeeded, &PeriodicOptions::default()).unwrap()
                })
            })
        });
        group.bench_with_input(BenchmarkId::new("tube_battery", threads), &threads, |b, _| {
            b.iter(|| pool.install(|| tube_battery(&sample, &[4, 16], 2.0, 4, 3).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
