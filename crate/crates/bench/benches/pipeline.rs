use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stokes_darcy::{assemble, basis, build_layout, generate_mesh, quad, run_demo, solve, CaseDefinition, EntityKind, ProblemConfig};

fn refelem(c: &mut Criterion) {
    let mut g = c.benchmark_group("refelem");
    for k in [1, 3, 6] {
        g.bench_with_input(BenchmarkId::new("triangle_basis", k), &k, |b, &k| {
            b.iter(|| basis(EntityKind::Triangle, black_box(k)).unwrap())
        });
        let set = basis(EntityKind::Triangle, k).unwrap();
        let rule = quad(EntityKind::Triangle, 2 * k + 2).unwrap();
        g.bench_with_input(BenchmarkId::new("tabulate", k), &k, |b, _| b.iter(|| set.tabulate(black_box(&rule.points))));
    }
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let mut g = c.benchmark_group("manufactured_n16");
    g.sample_size(10);
    let mesh = generate_mesh(16).unwrap();
    for k in 1..=3 {
        let config = ProblemConfig::new(CaseDefinition::manufactured(1.0, 1.0), k).with_beta(10.0 * (k * k) as f64);
        let layout = build_layout(&mesh, k, &config.case).unwrap();
        g.bench_with_input(BenchmarkId::new("assemble", k), &k, |b, _| {
            b.iter(|| assemble(&mesh, &layout, &config).unwrap())
        });
        let system = assemble(&mesh, &layout, &config).unwrap();
        g.bench_with_input(BenchmarkId::new("solve", k), &k, |b, _| b.iter(|| solve(&system, &layout).unwrap()));
    }
    g.finish();
}

fn demo(c: &mut Criterion) {
    let mut g = c.benchmark_group("demo");
    g.sample_size(10);
    let mesh = generate_mesh(24).unwrap();
    g.bench_function("k3_n24", |b| b.iter(|| run_demo(&mesh, 3).unwrap()));
    g.finish();
}

criterion_group!(benches, refelem, pipeline, demo);
criterion_main!(benches);
