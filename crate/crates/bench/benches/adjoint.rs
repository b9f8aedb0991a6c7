use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use krylov_adjoint::lanczos::{lanczos_forward, lanczos_vjp, LanczosCotangents};
use krylov_adjoint::operator::{hilbert_matrix, make_dense_operator};
use krylov_adjoint::{arnoldi_adjoint, arnoldi_forward, ArnoldiCotangents, Vector};
use nalgebra::DMatrix;

fn lanczos(c: &mut Criterion) {
    let n = 200;
    let a = hilbert_matrix(n) + DMatrix::identity(n, n);
    let (op, theta) = make_dense_operator(&a).unwrap();
    let v = Vector::from_fn(n, |i, _| ((i * 7919) % 13) as f64 - 6.0);
    let mut group = c.benchmark_group("lanczos");
    for k in [10, 50, 100] {
        let fact = lanczos_forward(&op, &theta, &v, k, false).unwrap();
        let mut cot = LanczosCotangents::zeros(n, k);
        cot.grad_diag.fill(1.0);
        cot.grad_offdiag.fill(1.0);
        group.bench_with_input(BenchmarkId::new("forward", k), &k, |b, &k| {
            b.iter(|| lanczos_forward(&op, &theta, &v, k, false).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("adjoint", k), &k, |b, _| {
            b.iter(|| lanczos_vjp(&op, &theta, &fact, &cot).unwrap())
        });
    }
    group.finish();
}

fn arnoldi(c: &mut Criterion) {
    let n = 200;
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 1.0 / (1.0 + i as f64 + 2.0 * j as f64) });
    let (op, theta) = make_dense_operator(&a).unwrap();
    let v = Vector::from_element(n, 1.0);
    let mut group = c.benchmark_group("arnoldi");
    for k in [10, 50] {
        let fact = arnoldi_forward(&op, &theta, &v, k, true).unwrap();
        let mut cot = ArnoldiCotangents::zeros(n, k);
        cot.grad_h.fill(1.0);
        group.bench_with_input(BenchmarkId::new("forward", k), &k, |b, &k| {
            b.iter(|| arnoldi_forward(&op, &theta, &v, k, true).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("adjoint", k), &k, |b, _| {
            b.iter(|| arnoldi_adjoint(&op, &theta, &fact, &cot, true).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, lanczos, arnoldi);
criterion_main!(benches);
