use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use evtpr_bench::random_stream;
use evtpr_core::representations::{build_tpr, build_voxel_grid};
use std::hint::black_box;

fn voxel_grid(c: &mut Criterion) {
    let mut group = c.benchmark_group("voxel_grid");
    for n in [100_000, 1_000_000] {
        let stream = random_stream(n, 1);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &stream, |b, s| {
            b.iter(|| build_voxel_grid(black_box(s), 5, 0, 1_000_000).unwrap())
        });
    }
    group.finish();
}

fn temporal_pyramid(c: &mut Criterion) {
    let mut group = c.benchmark_group("tpr");
    let stream = random_stream(1_000_000, 2);
    group.throughput(Throughput::Elements(stream.len() as u64));
    for (levels, moments) in [(3, 3), (7, 2), (7, 9)] {
        group.bench_function(format!("L{levels}_M{moments}"), |b| {
            b.iter(|| build_tpr(black_box(&stream), 500_000.0, 500_000.0, levels, moments, 3.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, voxel_grid, temporal_pyramid);
criterion_main!(benches);
