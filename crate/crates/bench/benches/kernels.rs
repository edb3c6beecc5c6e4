use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use evspace_bench::{binary_matrix, export_values, logistic_data, weighted_edges};
use evspace_core::centrality::{closeness, CountrySubspace};
use evspace_core::productspace::{pci, proximity};
use evspace_core::regress::fit_logistic;
use evspace_core::specialization::balassa;

fn bench_rca(c: &mut Criterion) {
    let mut g = c.benchmark_group("rca");
    for (rows, cols) in [(50, 500), (200, 5000)] {
        let values = export_values(rows, cols, 0.4, 1);
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{rows}x{cols}")),
            &values,
            |b, v| b.iter(|| balassa(black_box(v)).unwrap()),
        );
    }
    g.finish();
}

fn bench_proximity(c: &mut Criterion) {
    let mut g = c.benchmark_group("proximity");
    g.sample_size(20);
    for (rows, cols) in [(50, 500), (200, 2000)] {
        let m = binary_matrix(rows, cols, 0.15, 2);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{rows}x{cols}")), &m, |b, m| {
            b.iter(|| proximity(black_box(m)))
        });
    }
    let m = binary_matrix(200, 1000, 0.15, 3);
    g.bench_function("pci/200x1000", |b| b.iter(|| pci(black_box(&m))));
    g.finish();
}

fn bench_closeness(c: &mut Criterion) {
    let mut g = c.benchmark_group("closeness");
    for n in [200, 1000] {
        let edges = weighted_edges(n, 0.05, 4);
        let sub = CountrySubspace::from_edges("X", n, &edges);
        let targets: Vec<usize> = (0..n).step_by(10).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &sub, |b, s| {
            b.iter(|| closeness(black_box(s), &targets).unwrap())
        });
    }
    g.finish();
}

fn bench_irls(c: &mut Criterion) {
    let mut g = c.benchmark_group("irls");
    for n in [1000, 20000] {
        let (x, y) = logistic_data(n, &[0.5, -0.3, 0.2], -1.0, 5);
        g.bench_with_input(BenchmarkId::from_parameter(n), &(x, y), |b, (x, y)| {
            b.iter(|| fit_logistic(black_box(x), black_box(y), &["a", "b", "c"]).unwrap())
        });
    }
    g.finish();
}

criterion_group!(kernels, bench_rca, bench_proximity, bench_closeness, bench_irls);
criterion_main!(kernels);
