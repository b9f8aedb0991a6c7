mod common;

use common::*;
use krylov_adjoint::operator::{hilbert_matrix, rbf_params, CsrMatrix, SparseOperator};
use krylov_adjoint::{
    make_dense_operator, make_hilbert_operator, make_rbf_kernel_operator, make_wave_operator, read_matrix_market,
    write_matrix_market, MatVecOperator, Matrix, ParamVector, Vector,
};
use proptest::prelude::*;
use rand::Rng;

fn adjointness_gap(op: &MatVecOperator, theta: &ParamVector, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let n = op.dim();
    let v = randn(&mut r, n);
    let w = randn(&mut r, n);
    let lhs = w.dot(&op.apply(theta, &v));
    let rhs = op.apply_transpose(theta, &w).dot(&v);
    let scale = v.norm() * w.norm() * op.to_dense(theta).norm();
    ((lhs - rhs).abs(), 1e-10 * scale)
}

fn vjp_fd_error(op: &MatVecOperator, theta: &ParamVector, seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = op.dim();
    let v = randn(&mut r, n);
    let w = randn(&mut r, n);
    let d: Vec<f64> = randn(&mut r, theta.len()).iter().copied().collect();
    let g = op.vjp_params(theta, &v, &w);
    let analytic: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
    let scale = 1.0 + theta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let fd = central_diff(scale, |h| w.dot(&op.apply(&theta.perturbed(&d, h).unwrap(), &v)));
    rel_err(analytic, fd)
}

fn wave(n: usize, seed: u64) -> (MatVecOperator, ParamVector) {
    let mut r = rng(seed);
    let omega: Vec<f64> = (0..n * n).map(|_| 0.2 + r.random::<f64>()).collect();
    make_wave_operator(n, &omega, 0.05).unwrap()
}

fn rbf(m: usize, seed: u64) -> (MatVecOperator, ParamVector) {
    let mut r = rng(seed);
    let op = make_rbf_kernel_operator(&random_points(&mut r, m, 3), 5).unwrap();
    let theta = rbf_params(0.3 + r.random::<f64>(), 0.5 + r.random::<f64>(), 0.1 + r.random::<f64>()).unwrap();
    (op, theta)
}

fn random_sparse(n: usize, seed: u64) -> CsrMatrix {
    let mut r = rng(seed);
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if r.random::<f64>() < 0.3 {
                triplets.push((i, j, r.random::<f64>() * 2.0 - 1.0));
            }
        }
    }
    CsrMatrix::from_triplets(n, &triplets).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dense_products_are_adjoint(n in 1usize..9, seed in any::<u64>()) {
        let m = randn_matrix(&mut rng(seed), n, n);
        let (op, theta) = make_dense_operator(&m).unwrap();
        let (gap, tol) = adjointness_gap(&op, &theta, seed ^ 1);
        prop_assert!(gap <= tol, "gap {gap:e} > {tol:e}");
    }

    #[test]
    fn wave_products_are_adjoint(n in 2usize..6, seed in any::<u64>()) {
        let (op, theta) = wave(n, seed);
        let (gap, tol) = adjointness_gap(&op, &theta, seed ^ 2);
        prop_assert!(gap <= tol, "gap {gap:e} > {tol:e}");
    }

    #[test]
    fn rbf_products_are_adjoint(m in 1usize..30, seed in any::<u64>()) {
        let (op, theta) = rbf(m, seed);
        let (gap, tol) = adjointness_gap(&op, &theta, seed ^ 3);
        prop_assert!(gap <= tol, "gap {gap:e} > {tol:e}");
    }

    #[test]
    fn sparse_products_are_adjoint(n in 1usize..15, seed in any::<u64>()) {
        let op = MatVecOperator::new(SparseOperator::new(random_sparse(n, seed), false));
        let (gap, tol) = adjointness_gap(&op, &ParamVector::empty(), seed ^ 4);
        prop_assert!(gap <= tol + 1e-300, "gap {gap:e} > {tol:e}");
    }

    #[test]
    fn wave_vjp_matches_finite_differences(n in 2usize..5, seed in any::<u64>()) {
        let (op, theta) = wave(n, seed);
        let err = vjp_fd_error(&op, &theta, seed ^ 5);
        prop_assert!(err <= 1e-5, "rel. error {err:e}");
    }

    #[test]
    fn rbf_vjp_matches_finite_differences(m in 2usize..25, seed in any::<u64>()) {
        let (op, theta) = rbf(m, seed);
        let err = vjp_fd_error(&op, &theta, seed ^ 6);
        prop_assert!(err <= 1e-5, "rel. error {err:e}");
    }
}

#[test]
fn dense_vjp_is_the_flattened_outer_product() {
    let mut r = rng(11);
    let m = randn_matrix(&mut r, 4, 4);
    let (op, theta) = make_dense_operator(&m).unwrap();
    let v = randn(&mut r, 4);
    let w = randn(&mut r, 4);
    let g = op.vjp_params(&theta, &v, &w);
    let want = flatten_row_major(&(&w * v.transpose()));
    assert!(g.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-15));
}

#[test]
fn hilbert_operator_entries_and_symmetry() {
    let (op, theta) = make_hilbert_operator(2).unwrap();
    assert!(theta.is_empty());
    let a = op.to_dense(&theta);
    let want = Matrix::from_row_slice(2, 2, &[1.0 / 3.0, 0.25, 0.25, 0.2]);
    assert!((a - want).amax() < 1e-16);

    let (op, theta) = make_hilbert_operator(8).unwrap();
    assert!(op.is_symmetric());
    let a = op.to_dense(&theta);
    assert_eq!(a, a.transpose());
    assert_eq!(a, hilbert_matrix(8));
    assert!(make_hilbert_operator(0).is_err());
}

#[test]
fn rbf_diagonal_is_exact() {
    let (op, theta) = rbf(12, 3);
    let diag = op.diagonal(&theta).unwrap();
    let dense = op.to_dense(&theta);
    assert!((diag - dense.diagonal()).amax() < 1e-15);
}

#[test]
fn rbf_blocking_does_not_change_products() {
    let mut r = rng(50);
    let pts = random_points(&mut r, 50, 2);
    let theta = rbf_params(0.4, 1.3, 0.2).unwrap();
    let v = randn(&mut r, 50);
    let reference = make_rbf_kernel_operator(&pts, 50).unwrap().to_dense(&theta) * &v;
    for block in [1, 7, 50] {
        let op = make_rbf_kernel_operator(&pts, block).unwrap();
        assert!((op.apply(&theta, &v) - &reference).amax() < 1e-12, "block {block}");
    }
}

#[test]
fn matrix_market_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (symmetric, seed) in [(false, 1u64), (true, 2)] {
        let mut m = random_sparse(10, seed);
        if symmetric {
            let lower: Vec<_> = m.triplets().filter(|&(i, j, _)| i >= j).collect();
            let mut both = lower.clone();
            both.extend(lower.iter().filter(|&&(i, j, _)| i != j).map(|&(i, j, x)| (j, i, x)));
            m = CsrMatrix::from_triplets(10, &both).unwrap();
        }
        let path = dir.path().join(format!("m{seed}.mtx"));
        write_matrix_market(&path, &m, symmetric).unwrap();
        let (op, theta) = read_matrix_market(&path).unwrap();
        assert_eq!(op.is_symmetric(), symmetric);
        let original = MatVecOperator::new(SparseOperator::new(m, symmetric));
        let mut r = rng(seed);
        for _ in 0..5 {
            let v = randn(&mut r, 10);
            let diff = op.apply(&theta, &v) - original.apply(&theta, &v);
            assert!(diff.amax() <= 1e-15, "{diff}");
        }
    }
}

#[test]
fn products_count_once_each() {
    let (op, theta) = wave(3, 0);
    let v = Vector::from_element(op.dim(), 1.0);
    op.reset_counters();
    op.apply(&theta, &v);
    op.apply_transpose(&theta, &v);
    op.apply_transpose(&theta, &v);
    op.vjp_params(&theta, &v, &v);
    assert_eq!((op.apply_count(), op.transpose_count(), op.matvec_count(), op.vjp_count()), (1, 2, 3, 1));
}
