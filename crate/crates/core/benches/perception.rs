//! Parallel vs sequential kernels. Run twice and compare the reports:
//!
//!     cargo bench -p perception-core
//!     cargo bench -p perception-core --no-default-features
//!
//! Benchmark ids carry the build mode, so both runs land side by side.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use perception_core::nfa::{perception_score, TupleExpectationParams};
use perception_core::stream::{window_counts, WindowMode};
use perception_core::{par, FitOptions, Matrix, PerceptionModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mode() -> &'static str {
    if par::is_parallel() {
        "parallel"
    } else {
        "sequential"
    }
}

fn synthetic(rows: usize, cols: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let data = (0..rows * cols)
        .map(|_| ((rng.gen::<f64>() - 0.5) * 2e6).round() / 1e6)
        .collect();
    Matrix::new(rows, cols, data).unwrap()
}

fn bench_lifecycle(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("lifecycle/{}", mode()));
    group.sample_size(10);
    for &(rows, cols) in &[(10_000, 1), (50_000, 29), (285_000, 29)] {
        let x = synthetic(rows, cols);
        group.throughput(Throughput::Elements(rows as u64));
        group.bench_with_input(
            BenchmarkId::new("fit", format!("{rows}x{cols}")),
            &x,
            |b, x| b.iter(|| PerceptionModel::fit(black_box(x), FitOptions::default()).unwrap()),
        );
        let model = PerceptionModel::fit(&x, FitOptions::default()).unwrap();
        group.bench_with_input(
            BenchmarkId::new("predict", format!("{rows}x{cols}")),
            &x,
            |b, x| b.iter(|| model.predict(black_box(x)).unwrap()),
        );
    }
    group.finish();
}

fn bench_scores(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("score-sweep/{}", mode()));
    let (s, w) = (1_000_000u64, 100_000u64);
    for &count in &[10_000usize, 1_000_000] {
        group.throughput(Throughput::Elements(count as u64));
        group.bench_with_input(BenchmarkId::from_parameter(count), &count, |b, &count| {
            b.iter(|| {
                par::map_range(count, |n| {
                    perception_score(TupleExpectationParams::new(s, w, n as u64).unwrap())
                })
            })
        });
    }
    group.finish();
}

fn bench_windows(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let stream: Vec<u8> = (0..500_000).map(|_| u8::from(rng.gen_bool(0.01))).collect();
    let mut group = c.benchmark_group(format!("windowing/{}", mode()));
    for m in [WindowMode::Adjacent, WindowMode::Sliding] {
        group.bench_function(m.to_string(), |b| {
            b.iter(|| window_counts(black_box(&stream), 64, m).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_lifecycle, bench_scores, bench_windows);
criterion_main!(benches);
