use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cavity_rc_bench::records;
use cavity_rc_core::readout::{fourier_features, FourierSelector};

fn fourier(c: &mut Criterion) {
    let mut group = c.benchmark_group("fourier_features");
    for window in [256, 4096] {
        let recs = records(10, window + 100);
        let bins: Vec<usize> = (1..window / 8).collect();
        let selector = FourierSelector::new(0.002, window, bins).unwrap();
        group.bench_function(BenchmarkId::from_parameter(window), |b| {
            b.iter(|| fourier_features(&recs, &selector).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, fourier);
criterion_main!(benches);
