use asl_core::analysis::{error_exponent, refined_moments, worst_case_adaptation, THREE_DB_EPSILON};
use asl_core::graph::analyze_network;
use asl_core::presets::reference_setup;
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn analysis(c: &mut Criterion) {
    let s = reference_setup();
    let net = analyze_network(&s.matrix).unwrap();
    c.bench_function("analyze_network/reference", |b| b.iter(|| analyze_network(black_box(&s.matrix)).unwrap()));
    c.bench_function("error_exponent/reference", |b| {
        b.iter(|| error_exponent(black_box(&s.model), black_box(&net.pi), 0).unwrap())
    });
    c.bench_function("refined_moments/delta_0.01", |b| {
        b.iter(|| refined_moments(black_box(&s.model), &s.matrix, 0.01, 0, None).unwrap())
    });
    c.bench_function("worst_case_adaptation/delta_0.05", |b| {
        b.iter(|| worst_case_adaptation(black_box(&s.model), &net, 0.05, THREE_DB_EPSILON).unwrap())
    });
}

criterion_group!(benches, analysis);
criterion_main!(benches);
