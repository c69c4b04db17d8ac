use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use kge_bench::{calibration_fixture, isotonic_points, model_fixture, reliability_points};
use kge_core::calibration::{fit_affine_scaling, pool_adjacent_violators};
use kge_core::eval::reliability_report;
use kge_core::models::ModelKind;

fn bench_scoring(c: &mut Criterion) {
    let mut group = c.benchmark_group("score_all_relations");
    for kind in ModelKind::ALL {
        let model = model_fixture(kind, 50, 1000, 11);
        group.bench_with_input(BenchmarkId::from_parameter(kind), &model, |b, model| {
            b.iter(|| model.score_all_relations(black_box(3), black_box(7)).unwrap());
        });
    }
    group.finish();
}

fn bench_ece(c: &mut Criterion) {
    let points = reliability_points(10_000, 1);
    c.bench_function("reliability_report_10k", |b| {
        b.iter(|| reliability_report(black_box(&points), 10).unwrap());
    });
}

fn bench_pav(c: &mut Criterion) {
    let points = isotonic_points(10_000, 2);
    c.bench_function("pool_adjacent_violators_10k", |b| {
        b.iter(|| pool_adjacent_violators(black_box(&points)));
    });
}

fn bench_affine_fit(c: &mut Criterion) {
    let data = calibration_fixture(11, 500, 3);
    let mut group = c.benchmark_group("affine_scaling_fit");
    group.sample_size(10);
    group.bench_function("vector_k11_n500", |b| {
        b.iter(|| fit_affine_scaling(black_box(&data), true, 0.0).unwrap());
    });
    group.bench_function("matrix_k11_n500", |b| {
        b.iter(|| fit_affine_scaling(black_box(&data), false, 0.0).unwrap());
    });
    group.finish();
}

criterion_group!(benches, bench_scoring, bench_ece, bench_pav, bench_affine_fit);
criterion_main!(benches);
