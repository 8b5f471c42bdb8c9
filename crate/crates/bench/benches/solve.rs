use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use optex::{run_hjb_suite, solve, solve_roots, GridSpec, StatePoint};
use optex_bench::{random_sets, reference_sets};
use std::hint::black_box;

fn roots_and_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    for (name, p) in reference_sets() {
        g.bench_with_input(BenchmarkId::new("roots", name), &p, |b, p| b.iter(|| solve_roots(black_box(p))));
        g.bench_with_input(BenchmarkId::new("full", name), &p, |b, p| b.iter(|| solve(black_box(p))));
    }
    let sets = random_sets(64, 5, 1);
    g.bench_function("random_order5_x64", |b| {
        b.iter(|| sets.iter().map(|p| solve(p).unwrap().bstar).sum::<f64>())
    });
    g.finish();
}

fn evaluate(c: &mut Criterion) {
    let (_, p) = &reference_sets()[1];
    let sol = solve(p).unwrap();
    let pts: Vec<StatePoint> =
        (0..1000).map(|i| StatePoint::new(-1.0 + 0.005 * i as f64, 0.5 + 0.002 * i as f64)).collect();
    c.bench_function("value/derivs_1000", |b| {
        b.iter(|| pts.iter().map(|&pt| sol.derivs(black_box(pt)).v).sum::<f64>())
    });
    let mut g = c.benchmark_group("verify");
    g.sample_size(10);
    g.bench_function("hjb_suite_single_exponential", |b| b.iter(|| run_hjb_suite(&sol, &GridSpec::default())));
    g.finish();
}

criterion_group!(benches, roots_and_solve, evaluate);
criterion_main!(benches);
