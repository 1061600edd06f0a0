use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lodlab_bench::blocks;
use lodlab_core::fem::{assemble_stiffness, DofMap};
use lodlab_core::linalg::EnvelopeCholesky;
use lodlab_core::quasi_interp::build_operator;
use lodlab_core::{LodProblem, OperatorKind};

fn bench_assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assemble_stiffness");
    for n in [64, 128] {
        let (h, coeff) = blocks(4, n, 1e6);
        let dofs = DofMap::interior(h.fine());
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| assemble_stiffness(h.fine(), black_box(coeff.fine()), &dofs).unwrap())
        });
    }
    g.finish();
}

fn bench_cholesky(c: &mut Criterion) {
    let mut g = c.benchmark_group("envelope_cholesky");
    g.sample_size(20);
    for n in [64, 128] {
        let (h, coeff) = blocks(4, n, 1e6);
        let k = assemble_stiffness(h.fine(), coeff.fine(), &DofMap::interior(h.fine())).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| EnvelopeCholesky::factor(black_box(&k)).unwrap())
        });
    }
    g.finish();
}

fn bench_operators(c: &mut Criterion) {
    let (h, coeff) = blocks(8, 128, 1e6);
    let mut g = c.benchmark_group("build_operator");
    g.sample_size(10);
    for kind in OperatorKind::ALL {
        g.bench_function(kind.as_str(), |b| b.iter(|| build_operator(kind, &h, &coeff).unwrap()));
    }
    g.finish();
}

fn bench_correctors(c: &mut Criterion) {
    let (h, coeff) = blocks(8, 128, 1e6);
    let op = build_operator(OperatorKind::AwProj, &h, &coeff).unwrap();
    let lod = LodProblem::new(&h, &coeff, &op).unwrap();
    let z = h.coarse().vertex_index(4, 4);
    let mut g = c.benchmark_group("corrector");
    g.sample_size(10);
    for k in [1, 2, 3] {
        g.bench_with_input(BenchmarkId::new("nodal", k), &k, |b, &k| b.iter(|| lod.corrector_local(z, k).unwrap()));
    }
    let t = h.coarse().vertex_triangles(z)[0];
    g.bench_function("element_k2", |b| b.iter(|| lod.twostep_element(t, z, 2).unwrap()));
    g.finish();
}

criterion_group!(kernels, bench_assembly, bench_cholesky, bench_operators, bench_correctors);
criterion_main!(kernels);
